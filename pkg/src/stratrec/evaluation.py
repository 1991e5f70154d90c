"""End-to-end evaluation: run simulated sessions over a corpus (or replay a
trajectory log) and assemble per-dialogue records plus the summary report.
"""

from __future__ import annotations

import json
from dataclasses import replace as dc_replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import ROLE_SEEKER, RawDialogue
from .dialogue import render_transcript
from .experts.prompts import PromptTemplate, TemplateName, default_templates
from .experts.rewarder import ScoreParseError
from .metrics import (
    EvalRecord,
    MetricsReport,
    extract_recommended_items,
    judge_credibility,
    judge_watching_intention,
    measure_intentions,
    persuasiveness,
)
from .policy import PolicyParams
from .retrieval import FactBundle, KnowledgeTriple, retrieve_facts
from .runlog import dumps_record, read_trajectory_log
from .session import ScriptedUser, SessionConfig, SessionRollout, run_session

Templates = dict[TemplateName, PromptTemplate]


def scripted_user_from_dialogue(dialogue: RawDialogue) -> ScriptedUser:
    """Replay the dialogue's seeker side: first seeker turn opens, the rest reply."""
    seeker_texts = [t.text for t in dialogue.turns if t.role == ROLE_SEEKER]
    if not seeker_texts:
        seeker_texts = ["hi, i am looking for a movie"]
    return ScriptedUser(seeker_texts[1:] or [seeker_texts[0]], opening=seeker_texts[0], cycle=True)


def item_facts(store: Sequence[KnowledgeTriple], item: str, cap: int = 16) -> FactBundle:
    return retrieve_facts(store, [(item, 1.0)], cap)


def _union_facts_text(rollout: SessionRollout) -> str:
    lines: list[str] = []
    for turn in rollout.turns:
        for line in turn.facts.rendered.splitlines():
            if line and line not in lines:
                lines.append(line)
    return "\n".join(lines)


def evaluate_rollout(
    session_config: SessionConfig,
    rollout: SessionRollout,
    gold_item: Optional[str],
    templates: Optional[Templates] = None,
    judge_samples: int = 1,
    with_judges: bool = True,
) -> EvalRecord:
    """Score one finished session: acceptance, item metrics, judge metrics.

    The rewarder's backend doubles as the metric judge; judge scores stay
    absent when its replies cannot be parsed.
    """
    templates = templates or default_templates()
    state = rollout.final_state
    system_texts = tuple(state.system_texts())
    index = session_config.experts.retriever.index
    known = list(index.names) if index is not None else []
    recommended = extract_recommended_items(system_texts, known)
    wi = cred = prs = None
    if with_judges:
        backend = session_config.experts.rewarder.backend
        transcript = render_transcript(state)
        try:
            wi = judge_watching_intention(backend, templates[TemplateName.JUDGE_WI], transcript, judge_samples)
            cred = judge_credibility(
                backend,
                templates[TemplateName.JUDGE_CRED],
                transcript,
                FactBundle(entities=(), triples=(), rendered=_union_facts_text(rollout)),
                judge_samples,
            )
            if recommended:
                info = item_facts(session_config.experts.retriever.store, recommended[0])
                if info.rendered:
                    triple = measure_intentions(
                        backend, templates, state, recommended[0], info, judge_samples
                    )
                    prs = persuasiveness(triple)
        except ScoreParseError:
            wi = cred = prs = None
    return EvalRecord(
        session_id=state.session_id,
        accepted=rollout.trajectory.outcome.accepted,
        recommended_items=tuple(recommended),
        system_utterances=system_texts,
        gold_item=gold_item,
        wi=wi,
        cred=cred,
        prs=prs,
    )


def eval_from_corpus(
    session_config: SessionConfig,
    params: PolicyParams,
    dialogues: Sequence[RawDialogue],
    templates: Optional[Templates] = None,
    judge_samples: int = 1,
    with_judges: bool = True,
) -> tuple[list[EvalRecord], list[SessionRollout]]:
    """One simulated session per corpus dialogue, seeker side replayed."""
    records = []
    rollouts = []
    for i, dialogue in enumerate(dialogues):
        cfg = dc_replace(session_config, user=scripted_user_from_dialogue(dialogue))
        rng = np.random.default_rng([session_config.rng_seed, i])
        rollout = run_session(cfg, params, session_id=f"eval-{dialogue.dialogue_id}", rng=rng)
        rollouts.append(rollout)
        records.append(
            evaluate_rollout(cfg, rollout, dialogue.gold_item, templates, judge_samples, with_judges)
        )
    return records, rollouts


def eval_from_log(
    log_path: str | Path,
    known_names: Sequence[str] = (),
) -> list[EvalRecord]:
    """Deterministic metrics recomputed from a trajectory log."""
    records = []
    for turns in read_trajectory_log(log_path):
        system_texts = tuple(t["action"] for t in turns)
        accepted = turns[-1].get("outcome", "").startswith("accepted")
        records.append(
            EvalRecord(
                session_id=turns[0]["session_id"],
                accepted=accepted,
                recommended_items=tuple(extract_recommended_items(system_texts, known_names)),
                system_utterances=system_texts,
                gold_item=None,
            )
        )
    return records


def write_eval_outputs(
    records: Sequence[EvalRecord],
    report: MetricsReport,
    records_path: str | Path,
    report_path: str | Path,
) -> None:
    lines = []
    for r in records:
        lines.append(
            dumps_record(
                {
                    "session_id": r.session_id,
                    "accepted": r.accepted,
                    "recommended_items": list(r.recommended_items),
                    "gold_item": r.gold_item,
                    "wi": r.wi,
                    "cred": r.cred,
                    "prs": r.prs,
                }
            )
        )
    Path(records_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(report_path).write_text(
        json.dumps(report.to_record(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
