"""Command-line pipeline: ingest, judge, rank, evaluate, cost, similarity, report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from filelock import FileLock

from . import btmodel, costing, evaluation, judge, ranking, similarity, tournament
from .corpus import Corpus, load_corpus, publication_counts
from .errors import PairRankError, ValidationError
from .fileio import atomic_write_text

_CONFIG_KEYS = {
    "manifest",
    "out_dir",
    "cache_dir",
    "backend",
    "model_id",
    "api_base",
    "prompt_version",
    "temperature",
    "max_retries",
    "two_pass",
    "noise_mode",
    "seed",
    "max_in_flight",
    "schedule_mode",
    "k_per_item",
    "embed_backend",
    "embed_model_id",
    "embed_api_base",
    "embed_dims",
    "threshold",
    "fractions",
    "cost",
}


@dataclass
class CampaignConfig:
    """Declarative campaign settings; CLI flags override file values override defaults."""

    manifest: str = "manifest.json"
    out_dir: str = "out"
    cache_dir: Optional[str] = None  # defaults to out_dir
    backend: str = "simulated"
    model_id: str = "gemini-2.5-flash"
    api_base: str = "https://openrouter.ai/api/v1/chat/completions"
    prompt_version: str = "v1"
    temperature: float = 0.0
    max_retries: int = 4
    two_pass: bool = False
    noise_mode: str = "bradley_terry"
    seed: int = 0
    max_in_flight: int = 4
    schedule_mode: str = "full"
    k_per_item: int = 3
    embed_backend: str = "simulated"
    embed_model_id: str = "qwen3-embedding-8b"
    embed_api_base: str = ""
    embed_dims: int = 4096
    threshold: float = 0.8
    fractions: list[float] = field(
        default_factory=lambda: [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
    )
    cost: costing.CostParams = field(default_factory=costing.CostParams)

    @property
    def cache_root(self) -> Path:
        return Path(self.cache_dir if self.cache_dir is not None else self.out_dir)


def load_campaign_config(args: argparse.Namespace) -> CampaignConfig:
    data: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ValidationError(f"{path}: unknown config keys: {sorted(unknown)}")
    cost_data = dict(data.pop("cost", {}))
    cfg = CampaignConfig(**data)

    for flag, attr in (
        ("manifest", "manifest"),
        ("out", "out_dir"),
        ("cache_dir", "cache_dir"),
        ("backend", "backend"),
        ("model", "model_id"),
        ("api_base", "api_base"),
        ("seed", "seed"),
        ("max_in_flight", "max_in_flight"),
        ("schedule", "schedule_mode"),
        ("k_per_item", "k_per_item"),
        ("noise_mode", "noise_mode"),
        ("threshold", "threshold"),
        ("embed_backend", "embed_backend"),
        ("embed_dims", "embed_dims"),
        ("two_pass", "two_pass"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    fractions = getattr(args, "fractions", None)
    if fractions is not None:
        try:
            cfg.fractions = [float(f) for f in fractions.split(",") if f.strip()]
        except ValueError as exc:
            raise ValidationError(f"--fractions: {exc}") from exc
    for override in getattr(args, "cost", None) or []:
        key, _, raw = override.partition("=")
        if not _:
            raise ValidationError(f"--cost expects KEY=VALUE, got {override!r}")
        if key not in {f.name for f in dataclasses.fields(costing.CostParams)}:
            raise ValidationError(f"--cost: unknown cost parameter '{key}'")
        try:
            cost_data[key] = float(raw)
        except ValueError as exc:
            raise ValidationError(f"--cost {key}: {exc}") from exc
    if cost_data:
        cfg.cost = costing.CostParams(**cost_data)
    return cfg


def _judge_config(cfg: CampaignConfig, corpus: Corpus) -> judge.JudgeConfig:
    latent = None
    if cfg.backend == "simulated":
        latent = judge.default_latents(sorted(corpus.proposals), cfg.seed)
    return judge.JudgeConfig(
        backend=cfg.backend,
        model_id=cfg.model_id,
        api_base=cfg.api_base,
        temperature=cfg.temperature,
        max_retries=cfg.max_retries,
        prompt_version=cfg.prompt_version,
        two_pass=cfg.two_pass,
        latent=latent,
        noise_mode=cfg.noise_mode,
        seed=cfg.seed,
    )


def _embed_config(cfg: CampaignConfig) -> similarity.EmbedConfig:
    return similarity.EmbedConfig(
        backend=cfg.embed_backend,
        model_id=cfg.embed_model_id,
        api_base=cfg.embed_api_base,
        dims=cfg.embed_dims,
        seed=cfg.seed,
    )


def _selected_cycles(corpus: Corpus, args: argparse.Namespace) -> list[str]:
    wanted = getattr(args, "cycle", None)
    if wanted:
        for cycle_id in wanted:
            corpus.cycle(cycle_id)  # raises NotFoundError with the name
        return list(wanted)
    return list(corpus.cycles)


def _cycle_cache(cfg: CampaignConfig, cycle_id: str) -> Path:
    return cfg.cache_root / cycle_id / "comparisons.jsonl"


def _write_meta(cfg: CampaignConfig, command: str) -> None:
    # wall-clock state lives here so the report files stay diff-stable
    meta_path = Path(cfg.out_dir) / "run_meta.json"
    meta = {}
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            meta = {}
    meta[command] = datetime.now(timezone.utc).isoformat()
    atomic_write_text(meta_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _print_warnings(warnings, stream=None) -> None:
    for warning in warnings:
        print(f"warning: {warning}", file=stream or sys.stderr)


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    corpus = load_corpus(cfg.manifest)
    print(f"corpus: {len(corpus.proposals)} proposals in {len(corpus.cycles)} cycles")
    for cycle in corpus.cycles.values():
        rated = sum(
            1 for pid in cycle.proposal_ids if corpus.proposals[pid].human_score is not None
        )
        accepted = sum(1 for pid in cycle.proposal_ids if corpus.proposals[pid].accepted)
        print(f"  cycle {cycle.cycle_id}: N={cycle.n} ({rated} rated, {accepted} accepted)")
    print(f"publications: {len(corpus.publications)}")
    _print_warnings(corpus.warnings)
    return 0


def _progress_printer(cycle_id: str):
    def progress(done: int, total: int, tokens_in: int, tokens_out: int) -> None:
        print(
            f"\r{cycle_id}: {done}/{total} pairs, tokens in={tokens_in} out={tokens_out}",
            file=sys.stderr,
            end="",
        )
        if done == total:
            print(file=sys.stderr)

    return progress


def cmd_judge(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    corpus = load_corpus(cfg.manifest)
    judge_config = _judge_config(cfg, corpus)
    _, llm_per_pair = costing.unit_costs(cfg.cost)
    with FileLock(str(cfg.cache_root / ".pairrank.lock")):
        for cycle_id in _selected_cycles(corpus, args):
            cycle = corpus.cycle(cycle_id)
            if cycle.n < 2:
                print(f"warning: cycle {cycle_id} has fewer than 2 proposals; skipped",
                      file=sys.stderr)
                continue
            schedule = tournament.build_schedule(
                cycle,
                cfg.schedule_mode,
                k_per_item=cfg.k_per_item if cfg.schedule_mode == "sparse" else None,
                seed=cfg.seed,
            )
            cache_path = _cycle_cache(cfg, cycle_id)
            cached_before = sum(
                1 for _ in tournament.load_cache(cache_path)
            )
            records = tournament.run_tournament(
                corpus,
                schedule,
                judge_config,
                cache_path,
                max_in_flight=cfg.max_in_flight,
                progress=_progress_printer(cycle_id),
            )
            judged = len(records) - min(cached_before, len(records))
            tokens_in = sum(r.usage.input_tokens for r in records)
            tokens_out = sum(r.usage.output_tokens for r in records)
            spend = len(records) * llm_per_pair
            print(
                f"cycle {cycle_id}: {len(records)} pairs "
                f"({min(cached_before, len(records))} cached, {judged} judged), "
                f"tokens in={tokens_in} out={tokens_out}, est. spend ${spend:.4f}"
            )
    _write_meta(cfg, "judge")
    return 0


def _table_for_cycle(cfg: CampaignConfig, corpus: Corpus, cycle_id: str):
    cycle = corpus.cycle(cycle_id)
    cache_path = _cycle_cache(cfg, cycle_id)
    if not cache_path.exists():
        raise ValidationError(
            f"no comparison cache for cycle '{cycle_id}' at {cache_path}; "
            "run `pairrank judge` first"
        )
    records = list(tournament.load_cache(cache_path).values())
    matrix = btmodel.aggregate(records, cycle)
    scores = btmodel.solve_bt(matrix)
    table = ranking.rank_cycle(scores, corpus.proposals_in(cycle_id))
    return matrix, scores, table


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    corpus = load_corpus(cfg.manifest)
    with FileLock(str(cfg.cache_root / ".pairrank.lock")):
        for cycle_id in _selected_cycles(corpus, args):
            matrix, scores, table = _table_for_cycle(cfg, corpus, cycle_id)
            out_dir = Path(cfg.out_dir) / cycle_id
            btmodel.write_scores_csv(scores, matrix, out_dir / "scores.csv")
            btmodel.write_scores_json(scores, matrix, out_dir / "scores.json")
            ranking.write_rank_csv(table, out_dir / "ranks.csv")
            status = "converged" if scores.converged else "not converged"
            print(
                f"cycle {cycle_id}: ranked {len(table.rows)} proposals "
                f"({status} after {scores.iterations} iterations, delta={scores.final_delta:.3g})"
            )
            top = table.rows[: min(5, len(table.rows))]
            for row in top:
                print(f"  #{row.rank_llm} {row.proposal_id} s={row.bt_score:.4f}")
            _print_warnings(scores.warnings)
            _print_warnings(table.warnings)
    _write_meta(cfg, "rank")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    corpus = load_corpus(cfg.manifest)
    cycle_ids = _selected_cycles(corpus, args)
    if not any(
        p.human_score is not None for p in corpus.proposals.values()
    ):
        raise ValidationError(
            "no proposal carries a human score; human ranking is unavailable so there "
            "is nothing to evaluate against"
        )
    tables = {}
    curves = []
    with FileLock(str(cfg.cache_root / ".pairrank.lock")):
        for cycle_id in cycle_ids:
            _, _, table = _table_for_cycle(cfg, corpus, cycle_id)
            tables[cycle_id] = table
        dpubs = {
            cycle_id: {
                pid: counts.n_dpub
                for pid, counts in publication_counts(corpus, cycle_id).items()
            }
            for cycle_id in cycle_ids
        }
        report = evaluation.cycle_report(corpus, tables, dpubs)
        per_cycle_payload = {}
        for cycle_id, table in tables.items():
            payload: dict = {"cycle_id": cycle_id, "n_ranked": len(table.rows)}
            if len(table.rated_rows) >= 3:
                curve = evaluation.outlier_exclusion_curve(table, cfg.fractions)
                curves.append(curve)
                payload["rho_curve"] = [
                    {
                        "excluded_fraction": pt.excluded_fraction,
                        "rho": pt.rho,
                        "n_remaining": pt.n_remaining,
                    }
                    for pt in curve.points
                ]
                _print_warnings(curve.warnings)
            else:
                payload["rho_curve"] = []
                print(
                    f"warning: cycle {cycle_id} has fewer than 3 rated proposals; "
                    "correlation curve skipped",
                    file=sys.stderr,
                )
            result = next((r for r in report.results if r.cycle_id == cycle_id), None)
            payload["m_dpub"] = (
                None
                if result is None
                else {
                    "llm": result.m_dpub_llm,
                    "human": result.m_dpub_human,
                    "n_pub_proposals": result.n_pub_proposals,
                    "included": result.included,
                }
            )
            per_cycle_payload[cycle_id] = payload
            atomic_write_text(
                Path(cfg.out_dir) / cycle_id / "eval.json",
                json.dumps(payload, indent=2, sort_keys=True) + "\n",
            )
        evaluation.write_curve_csv(curves, Path(cfg.out_dir) / "rho_curves.csv")
        aggregate = {
            "m_dpub_llm": {"mean": report.mean_llm, "std": report.std_llm},
            "m_dpub_human": {"mean": report.mean_human, "std": report.std_human},
            "included_cycles": [r.cycle_id for r in report.results if r.included],
        }
        atomic_write_text(
            Path(cfg.out_dir) / "evaluation.json",
            json.dumps(
                {"cycles": per_cycle_payload, "aggregate": aggregate}, indent=2, sort_keys=True
            )
            + "\n",
        )
    for cycle_id, payload in sorted(per_cycle_payload.items()):
        points = payload["rho_curve"]
        rho0 = next(
            (pt["rho"] for pt in points if pt["excluded_fraction"] == 0.0), None
        )
        rho_txt = "n/a" if rho0 is None else f"{rho0:.3f}"
        print(f"cycle {cycle_id}: rho={rho_txt} over {payload['n_ranked']} proposals")
    if report.mean_llm is not None:
        print(
            f"M_dpub (LLM): {report.mean_llm:.3f} ± {report.std_llm:.3f}; "
            f"(human): "
            + (
                f"{report.mean_human:.3f} ± {report.std_human:.3f}"
                if report.mean_human is not None
                else "n/a"
            )
        )
    _print_warnings(report.warnings)
    _write_meta(cfg, "evaluate")
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    params = cfg.cost
    human, llm = costing.unit_costs(params)
    ratios = costing.cost_ratios(params)
    n_star = costing.crossover(params)
    print(f"human cost per review: ${human:.2f}")
    print(f"llm cost per pairwise judgment: ${llm:.4f}")
    print(f"cost ratio human/LLM per review: {round(ratios['per_review']):,}")
    for n in (30, 70):
        print(f"cost ratio at N={n}: {round(ratios[n]):,}")
    print(f"crossover pool size N*: {n_star:,}")
    max_n = max(200, int(n_star * 1.5))
    grid = sorted(
        set(range(2, 101))
        | {int(round(v)) for v in np.logspace(2, np.log10(max_n), 120)}
    )
    costing.write_cost_csv(
        costing.cost_curve(params, grid), Path(cfg.out_dir) / "cost_curve.csv"
    )
    print(f"cost curve written to {Path(cfg.out_dir) / 'cost_curve.csv'}")
    _write_meta(cfg, "cost")
    return 0


def cmd_similarity(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    corpus = load_corpus(cfg.manifest)
    cycle_ids = _selected_cycles(corpus, args)
    embed_config = _embed_config(cfg)
    with FileLock(str(cfg.cache_root / ".pairrank.lock")):
        vectors = similarity.embed_corpus(
            corpus, cycle_ids, embed_config, cfg.cache_root / "embeddings.jsonl"
        )
        for cycle_id in cycle_ids:
            matrix = similarity.similarity_matrix(corpus, vectors, cycle_id, cycle_id)
            out_dir = Path(cfg.out_dir) / cycle_id
            similarity.write_matrix_csv(matrix, out_dir / "similarity.csv")
            flagged = similarity.flag_pairs(matrix, cfg.threshold)
            similarity.write_flagged_csv(flagged, out_dir / "flagged.csv")
            print(f"cycle {cycle_id}: {len(flagged)} pairs at or above {cfg.threshold:g}")
            for id_a, id_b, score in flagged[:5]:
                print(f"  {id_a} ~ {id_b}: {score:.4f}")
        for i in range(len(cycle_ids)):
            for j in range(i + 1, len(cycle_ids)):
                row_c, col_c = cycle_ids[i], cycle_ids[j]
                matrix = similarity.similarity_matrix(corpus, vectors, row_c, col_c)
                name = f"inter_{row_c}_{col_c}"
                similarity.write_matrix_csv(matrix, Path(cfg.out_dir) / f"{name}.csv")
                flagged = similarity.flag_pairs(matrix, cfg.threshold)
                similarity.write_flagged_csv(
                    flagged, Path(cfg.out_dir) / f"{name}_flagged.csv"
                )
                print(
                    f"cycles {row_c} x {col_c}: {len(flagged)} pairs at or above "
                    f"{cfg.threshold:g}"
                )
        if getattr(args, "summarize_flagged", False):
            print(
                "note: --summarize-flagged passes flagged pairs through the chat backend; "
                "only available with --backend remote",
                file=sys.stderr,
            )
    _write_meta(cfg, "similarity")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args)
    eval_path = Path(cfg.out_dir) / "evaluation.json"
    if not eval_path.exists():
        raise ValidationError(
            f"no evaluation report at {eval_path}; run `pairrank evaluate` first"
        )
    evaluation_doc = json.loads(eval_path.read_text(encoding="utf-8"))
    scores_docs = {}
    for scores_path in sorted(Path(cfg.out_dir).glob("*/scores.json")):
        scores_docs[scores_path.parent.name] = json.loads(
            scores_path.read_text(encoding="utf-8")
        )
    params = cfg.cost
    human, llm = costing.unit_costs(params)
    ratios = costing.cost_ratios(params)
    report = {
        "evaluation": evaluation_doc,
        "scores": scores_docs,
        "cost": {
            "human_per_review": human,
            "llm_per_pair": llm,
            "ratios": {str(k): v for k, v in ratios.items()},
            "crossover": costing.crossover(params),
        },
    }
    atomic_write_text(
        Path(cfg.out_dir) / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    n_cycles = len(evaluation_doc.get("cycles", {}))
    print(f"report written to {Path(cfg.out_dir) / 'report.json'} ({n_cycles} cycles)")
    _write_meta(cfg, "report")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="campaign config JSON file")
    parser.add_argument("--manifest", help="corpus manifest path")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--cache-dir", dest="cache_dir", help="cache directory (defaults to --out)")
    parser.add_argument("--cycle", action="append", help="restrict to a cycle (repeatable)")
    parser.add_argument("--seed", type=int, help="random seed for simulated backends")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairrank",
        description="Rank document pools from pairwise preference tournaments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="load and summarize a corpus manifest")
    _add_common(p_ingest)
    p_ingest.set_defaults(func=cmd_ingest)

    p_judge = sub.add_parser("judge", help="run the pairwise tournament for each cycle")
    _add_common(p_judge)
    p_judge.add_argument("--backend", choices=["remote", "simulated"])
    p_judge.add_argument("--model", help="judge model id")
    p_judge.add_argument("--api-base", dest="api_base", help="chat completion endpoint")
    p_judge.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p_judge.add_argument("--schedule", choices=["full", "sparse"])
    p_judge.add_argument("--k-per-item", dest="k_per_item", type=int)
    p_judge.add_argument("--noise-mode", dest="noise_mode", choices=["noiseless", "bradley_terry"])
    p_judge.add_argument("--two-pass", dest="two_pass", action="store_const", const=True)
    p_judge.set_defaults(func=cmd_judge)

    p_rank = sub.add_parser("rank", help="aggregate judgments and rank each cycle")
    _add_common(p_rank)
    p_rank.set_defaults(func=cmd_rank)

    p_eval = sub.add_parser("evaluate", help="correlate LLM and human rankings, publication metric")
    _add_common(p_eval)
    p_eval.add_argument("--fractions", help="comma-separated outlier exclusion fractions")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cost = sub.add_parser("cost", help="cost model summary and plot data")
    _add_common(p_cost)
    p_cost.add_argument(
        "--cost", action="append", metavar="KEY=VALUE", help="override a cost parameter"
    )
    p_cost.set_defaults(func=cmd_cost)

    p_sim = sub.add_parser("similarity", help="embedding similarity matrices and flagged pairs")
    _add_common(p_sim)
    p_sim.add_argument("--threshold", type=float, help="flagging threshold in (-1, 1]")
    p_sim.add_argument("--embed-backend", dest="embed_backend", choices=["remote", "simulated"])
    p_sim.add_argument("--embed-dims", dest="embed_dims", type=int)
    p_sim.add_argument(
        "--summarize-flagged",
        dest="summarize_flagged",
        action="store_true",
        help="summarize flagged pairs through the chat backend (remote only)",
    )
    p_sim.set_defaults(func=cmd_similarity)

    p_report = sub.add_parser("report", help="combine per-cycle outputs into one report")
    _add_common(p_report)
    p_report.add_argument(
        "--cost", action="append", metavar="KEY=VALUE", help="override a cost parameter"
    )
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PairRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
