"""Run configuration, orchestration, and report emission.

``probe run`` loads the configured knowledge sources, compiles the probe
against the common candidate vocabulary, scores every query with every
backend, and writes the report artifacts.  All aggregates are derivable
from the raw per-query dump, which is always written.

Config files are flat ``key = value`` text; ``#`` starts a comment and
repeatable keys (``source``, ``vocab``, ``backend``) accumulate.  Paths
are resolved relative to the config file.  See README for the key list.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import analysis, corpus, kbbaseline, ranking, vocab as vocab_mod
from .adapter import (
    Backend,
    EchoBackend,
    SubprocessBackend,
    TcpBackend,
    UniformBackend,
    freq_fit,
    ngram_fit,
    score,
)
from .errors import BackendUnavailable, ConfigError, ProbeError, ProtocolViolation, VocabMismatch

log = logging.getLogger("clozeprobe.cli")

SOURCE_KINDS = ("google_re", "trex", "conceptnet", "squad")
BACKEND_KINDS = ("uniform", "echo", "freq", "ngram", "kb_naive", "kb_oracle",
                 "subprocess", "tcp")


@dataclass
class BackendSpec:
    kind: str
    name: str
    options: dict[str, str] = field(default_factory=dict)


@dataclass
class SourceSpec:
    kind: str
    path: str
    name: str


@dataclass
class RunConfig:
    sources: list[SourceSpec] = field(default_factory=list)
    template_path: Optional[str] = None
    vocab_paths: list[str] = field(default_factory=list)
    backends: list[BackendSpec] = field(default_factory=list)
    ks: list[int] = field(default_factory=list)
    seed: int = 13
    trex_cap: int = 1000
    topk: int = 10
    mention_per_relation: Optional[int] = None
    mentions_per_fact: Optional[int] = None
    mention_counts_path: Optional[str] = None
    output_dir: str = "probe-out"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


def parse_config(path) -> RunConfig:
    """Parse the flat key/value config format."""
    base = Path(path).parent
    config = RunConfig()

    def resolve(p: str) -> str:
        return str((base / p)) if not os.path.isabs(p) else p

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                _apply_key(config, key, value, resolve)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return config


def _apply_key(config: RunConfig, key: str, value: str, resolve) -> None:
    if key == "seed":
        config.seed = int(value)
    elif key == "trex_cap":
        config.trex_cap = int(value)
    elif key == "topk":
        config.topk = int(value)
    elif key == "ks":
        config.ks = [int(part.strip()) for part in value.split(",") if part.strip()]
    elif key == "templates":
        config.template_path = resolve(value)
    elif key == "vocab":
        config.vocab_paths.append(resolve(value))
    elif key == "out":
        config.output_dir = resolve(value)
    elif key == "source":
        parts = shlex.split(value)
        if len(parts) not in (2, 3):
            raise ConfigError(f"source needs '<kind> <path> [<name>]', got {value!r}")
        kind, path = parts[0], resolve(parts[1])
        name = parts[2] if len(parts) == 3 else kind
        config.sources.append(SourceSpec(kind, path, name))
    elif key == "backend":
        parts = shlex.split(value)
        if not parts:
            raise ConfigError("backend spec is empty")
        kind = parts[0]
        options: dict[str, str] = {}
        for part in parts[1:]:
            if "=" not in part:
                raise ConfigError(f"backend option {part!r} is not key=value")
            opt_key, opt_value = part.split("=", 1)
            if opt_key in ("corpus", "triples"):
                opt_value = resolve(opt_value)
            options[opt_key] = opt_value
        config.backends.append(BackendSpec(kind, options.pop("name", kind), options))
    elif key == "mention_per_relation":
        config.mention_per_relation = int(value)
    elif key == "mentions_per_fact":
        config.mentions_per_fact = int(value)
    elif key == "mention_counts":
        config.mention_counts_path = resolve(value)
    else:
        raise ConfigError(f"unknown config key {key!r}")


def validate(config: RunConfig) -> list[Diagnostic]:
    """Pure config linting; never opens a backend."""
    diags: list[Diagnostic] = []
    needs_templates = any(s.kind in ("google_re", "trex") for s in config.sources)
    if config.template_path is None:
        if needs_templates:
            diags.append(Diagnostic("E001", "template file required for triple sources"))
    elif not os.path.isfile(config.template_path):
        diags.append(Diagnostic("E001", f"template file missing: {config.template_path}"))

    names = [b.name for b in config.backends]
    for name in sorted({n for n in names if names.count(n) > 1}):
        diags.append(Diagnostic("E002", f"duplicate backend name {name!r}"))

    if not config.ks:
        diags.append(Diagnostic("E003", "ks is empty"))
    elif any(k < 1 for k in config.ks):
        diags.append(Diagnostic("E009", "every k must be >= 1"))

    if not config.sources:
        diags.append(Diagnostic("E004", "no sources configured"))
    for source in config.sources:
        if source.kind not in SOURCE_KINDS:
            diags.append(Diagnostic("E006", f"unknown source kind {source.kind!r}"))
        elif not os.path.isfile(source.path):
            diags.append(Diagnostic("E005", f"source file missing: {source.path}"))
    source_names = [s.name for s in config.sources]
    for name in sorted({n for n in source_names if source_names.count(n) > 1}):
        diags.append(Diagnostic("E010", f"duplicate source name {name!r}"))

    if not config.backends:
        diags.append(Diagnostic("E007", "no backends configured"))
    for spec in config.backends:
        diags.extend(_validate_backend_spec(spec))

    if not config.vocab_paths:
        diags.append(Diagnostic("E008", "no vocabulary files configured"))
    for path in config.vocab_paths:
        if not os.path.isfile(path):
            diags.append(Diagnostic("E008", f"vocabulary file missing: {path}"))

    if (config.mention_per_relation is None) != (config.mentions_per_fact is None):
        diags.append(Diagnostic(
            "E012", "mention analysis needs both mention_per_relation and mentions_per_fact"
        ))
    if config.mention_counts_path and not os.path.isfile(config.mention_counts_path):
        diags.append(Diagnostic(
            "E013", f"mention counts file missing: {config.mention_counts_path}"
        ))
    return diags


def _validate_backend_spec(spec: BackendSpec) -> list[Diagnostic]:
    if spec.kind not in BACKEND_KINDS:
        return [Diagnostic("E011", f"unknown backend kind {spec.kind!r}")]
    required = {
        "ngram": ("corpus",),
        "kb_naive": ("triples",),
        "kb_oracle": ("triples",),
        "subprocess": ("cmd",),
        "tcp": ("host", "port"),
    }.get(spec.kind, ())
    diags = []
    for option in required:
        if option not in spec.options:
            diags.append(Diagnostic(
                "E011", f"backend {spec.name!r} ({spec.kind}) needs option {option!r}"
            ))
    for option in ("corpus", "triples"):
        path = spec.options.get(option)
        if path is not None and not os.path.isfile(path):
            diags.append(Diagnostic(
                "E011", f"backend {spec.name!r}: {option} file missing: {path}"
            ))
    return diags


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class _SourceRun:
    spec: SourceSpec
    factset: corpus.FactSet
    probe: vocab_mod.ProbeSet
    fact_by_id: dict[str, corpus.Fact]


def _load_source(spec: SourceSpec, templates, config: RunConfig) -> corpus.FactSet:
    if spec.kind == "google_re":
        factset = corpus.load_google_re(spec.path, templates)
    elif spec.kind == "trex":
        factset = corpus.load_trex(spec.path, templates, config.trex_cap, config.seed)
    elif spec.kind == "conceptnet":
        factset = corpus.load_conceptnet(spec.path, config.seed)
    elif spec.kind == "squad":
        factset = corpus.load_squad_cloze(spec.path)
    else:
        raise ConfigError(f"unknown source kind {spec.kind!r}")
    factset.source_name = spec.name
    return factset


def _query_filter(probe: vocab_mod.ProbeSet, fact: corpus.Fact, gold: str) -> frozenset:
    filters = probe.filter_index.get((fact.subject, fact.relation_id), frozenset())
    return filters - {gold}


class _ScoringRunner:
    """Scores probe queries with an in-process or remote backend."""

    def __init__(self, backend: Backend, topk: int):
        self.backend = backend
        self.name = backend.name
        self.topk = topk
        self.is_log_prob = False

    def run(self, source: _SourceRun, vocab) -> list[ranking.RankResult]:
        queries = source.probe.queries
        if hasattr(self.backend, "score_many"):
            vectors = self.backend.score_many(queries)
        else:
            vectors = [score(self.backend, q, vocab) for q in queries]
        results = []
        for query, vec in zip(queries, vectors):
            fact = source.fact_by_id[query.fact_id]
            self.is_log_prob = self.is_log_prob or vec.is_log_prob
            results.append(ranking.filtered_rank(
                vec, query.gold, _query_filter(source.probe, fact, query.gold),
                vocab, fact_id=query.fact_id, relation_id=fact.relation_id,
                topk=self.topk,
            ))
        return results

    def run_queries(self, queries, source: _SourceRun, vocab) -> list[ranking.RankResult]:
        results = []
        for query in queries:
            vec = score(self.backend, query, vocab)
            fact = source.fact_by_id[query.fact_id]
            results.append(ranking.filtered_rank(
                vec, query.gold, _query_filter(source.probe, fact, query.gold),
                vocab, fact_id=query.fact_id, relation_id=fact.relation_id,
                topk=self.topk,
            ))
        return results

    def close(self):
        self.backend.close()


class _KbRunner:
    """Answers queries from the extracted-triple store instead of scores."""

    def __init__(self, name: str, store: kbbaseline.TripleStore, oracle: bool, topk: int):
        self.name = name
        self.store = store
        self.oracle = oracle
        self.topk = topk
        self.is_log_prob = False

    def run(self, source: _SourceRun, vocab) -> list[ranking.RankResult]:
        results = []
        for query in source.probe.queries:
            fact = source.fact_by_id[query.fact_id]
            if self.oracle:
                alignment = fact.evidences[0].provenance if fact.evidences else None
                ranked = kbbaseline.query_oracle(self.store, fact, alignment)
            else:
                ranked = kbbaseline.query_naive(self.store, fact.subject, fact.relation_id)
            results.append(kbbaseline.baseline_rank_result(fact, ranked, topk=self.topk))
        return results

    def close(self):
        pass


def _build_runner(spec: BackendSpec, source_run: _SourceRun, vocab, config: RunConfig,
                  cache: dict):
    """Freq and KB runners depend on per-source state; the rest are built
    once and reused across sources."""
    if spec.kind == "freq":
        retained = {q.fact_id for q in source_run.probe.queries}
        facts = [f for f in source_run.factset.facts if f.id in retained]
        return _ScoringRunner(freq_fit(facts, name=spec.name), config.topk)
    if spec.name in cache:
        return cache[spec.name]
    if spec.kind == "uniform":
        runner = _ScoringRunner(UniformBackend(spec.name), config.topk)
    elif spec.kind == "echo":
        runner = _ScoringRunner(EchoBackend(spec.name), config.topk)
    elif spec.kind == "ngram":
        with open(spec.options["corpus"], encoding="utf-8") as fh:
            tokens = fh.read().split()
        order = int(spec.options.get("order", "2"))
        add_k = float(spec.options.get("add_k", "0.1"))
        runner = _ScoringRunner(
            ngram_fit(tokens, order, add_k, name=spec.name), config.topk
        )
    elif spec.kind in ("kb_naive", "kb_oracle"):
        store = kbbaseline.load_triples(spec.options["triples"])
        runner = _KbRunner(spec.name, store, spec.kind == "kb_oracle", config.topk)
    elif spec.kind == "subprocess":
        runner = _ScoringRunner(
            SubprocessBackend(spec.options["cmd"], vocab,
                              timeout=float(spec.options.get("timeout", "60"))),
            config.topk,
        )
        runner.name = spec.name
    elif spec.kind == "tcp":
        runner = _ScoringRunner(
            TcpBackend(spec.options["host"], int(spec.options["port"]), vocab,
                       timeout=float(spec.options.get("timeout", "60"))),
            config.topk,
        )
        runner.name = spec.name
    else:
        raise ConfigError(f"unknown backend kind {spec.kind!r}")
    cache[spec.name] = runner
    return runner


def run(config: RunConfig) -> int:
    """Execute the probe and write all report artifacts.  Returns 0 on
    success; raises ConfigError / BackendUnavailable for the CLI to map
    to exit codes."""
    diags = validate(config)
    if diags:
        raise ConfigError("; ".join(str(d) for d in diags))

    templates = (corpus.load_templates(config.template_path)
                 if config.template_path else {})
    vocabulary = vocab_mod.intersect(
        [vocab_mod.load_vocab_file(p) for p in config.vocab_paths]
    )

    source_runs: list[_SourceRun] = []
    for spec in config.sources:
        factset = _load_source(spec, templates, config)
        queries = corpus.compile_queries(factset)
        probe = vocab_mod.compile_probe(
            queries, corpus.valid_object_index(factset), vocabulary
        )
        source_runs.append(_SourceRun(spec, factset, probe, factset.fact_by_id()))

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    mention_provider = None
    if config.mention_counts_path:
        counts = _load_mention_counts(config.mention_counts_path)
        mention_provider = lambda surface: counts.get(surface, 0)

    cache: dict = {}
    raw_lines: list[str] = []
    report: dict = {
        "seed": config.seed,
        "ks": list(config.ks),
        "vocab": {"size": len(vocabulary), "sha256": vocabulary.sha256()},
        "sources": {},
    }
    curve_rows: list[tuple[str, str, int, float]] = []
    distribution_rows: list[tuple[str, str, str, int, int]] = []
    correlation_rows: list[dict] = []
    backend_names = [spec.name for spec in config.backends]
    tsv_blocks: dict[str, dict] = {}

    try:
        for source_run in source_runs:
            source_name = source_run.spec.name
            source_report: dict = {
                "kind": source_run.spec.kind,
                "n_facts": len(source_run.factset.facts),
                "n_scored_queries": len(source_run.probe.queries),
                "exclusions": {
                    "ingestion": dict(sorted(source_run.factset.exclusions.items())),
                    "probe": dict(sorted(source_run.probe.exclusion_counts.items())),
                },
                "backends": {},
            }
            tsv_blocks[source_name] = {}
            mention_queries = _mention_queries(source_run, config, vocabulary)

            for spec in config.backends:
                runner = _build_runner(spec, source_run, vocabulary, config, cache)
                results = runner.run(source_run, vocabulary)
                for query, result in zip(source_run.probe.queries, results):
                    raw_lines.append(json.dumps({
                        "source": source_name,
                        "backend": runner.name,
                        "fact_id": result.fact_id,
                        "relation": result.relation_id,
                        "gold": query.gold,
                        "rank": result.rank,
                        "gold_score": result.gold_score,
                        "top1_token": result.top1_token,
                        "top1_log_prob": result.top1_log_prob,
                        "topk_tokens": list(result.topk_tokens),
                        "filtered_out": result.filtered_out,
                    }, ensure_ascii=False, sort_keys=True))

                backend_report = analysis.build_reports(results, config.ks)
                backend_report.by_cardinality = analysis.cardinality_rollup(
                    backend_report, source_run.factset.templates
                )
                source_report["backends"][runner.name] = _report_to_json(backend_report)
                tsv_blocks[source_name][runner.name] = backend_report
                for k, value in analysis.pk_curve(results, sorted(config.ks)):
                    curve_rows.append((source_name, runner.name, k, value))

                correlation_rows.extend(_correlations(
                    source_run, results, runner, mention_provider, source_name
                ))

                if mention_queries and isinstance(runner, _ScoringRunner):
                    dist = _mention_distribution(
                        runner, mention_queries, source_run, vocabulary
                    )
                    source_report.setdefault("mention_analysis", {})[runner.name] = \
                        dist.summary
                    for fact_id, ranks in dist.per_fact.items():
                        for mention_idx, rank in enumerate(ranks):
                            distribution_rows.append(
                                (source_name, runner.name, fact_id, mention_idx, rank)
                            )
            report["sources"][source_name] = source_report
    finally:
        for runner in cache.values():
            runner.close()

    _write_outputs(out_dir, config, report, raw_lines, curve_rows,
                   distribution_rows, correlation_rows, tsv_blocks,
                   backend_names, source_runs)
    return 0


def _load_mention_counts(path) -> dict[str, int]:
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'surface\\tcount'")
            counts[parts[0]] = int(parts[1])
    return counts


def _mention_queries(source_run: _SourceRun, config: RunConfig, vocabulary):
    """Mention queries grouped by fact, keeping only facts whose gold is
    rankable; each group keeps exactly mentions_per_fact queries."""
    if config.mention_per_relation is None or config.mentions_per_fact is None:
        return {}
    queries = corpus.sample_mention_queries(
        source_run.factset, config.mention_per_relation,
        config.mentions_per_fact, config.seed,
    )
    grouped: dict[str, list] = {}
    for query in queries:
        grouped.setdefault(query.fact_id, []).append(query)
    return {
        fact_id: group for fact_id, group in grouped.items()
        if group[0].gold in vocabulary
    }


def _mention_distribution(runner: _ScoringRunner, mention_queries, source_run,
                          vocabulary) -> analysis.RankDistribution:
    mention_ranks = {}
    for fact_id, queries in mention_queries.items():
        results = runner.run_queries(queries, source_run, vocabulary)
        mention_ranks[fact_id] = [r.rank for r in results]
    return analysis.rank_distribution(mention_ranks)


def _correlations(source_run, results, runner, mention_provider, source_name):
    providers = analysis.FeatureProviders(mention_count=mention_provider)
    features = []
    p1 = []
    for result in results:
        fact = source_run.fact_by_id[result.fact_id]
        features.append(analysis.feature_extract(fact, result, providers))
        p1.append(ranking.precision_at_k(result, 1))
    rows = []
    if len(results) >= 2:
        for feature, stats in analysis.feature_correlations(features, p1).items():
            rows.append({"source": source_name, "backend": runner.name,
                         "feature": feature, **stats})
    return rows


def _report_to_json(report: analysis.CorpusReport) -> dict:
    return {
        "per_relation": [
            {
                "relation": rel.relation_id,
                "n_facts": rel.n_facts,
                "p_at": {str(k): v for k, v in rel.p_at.items()},
                "mean_rank": rel.mean_rank,
            }
            for rel in report.per_relation
        ],
        "macro_p_at": {str(k): v for k, v in report.macro_p_at.items()},
        "micro_p_at": {str(k): v for k, v in report.micro_p_at.items()},
        "by_cardinality": {
            label: {str(k): v for k, v in values.items()}
            for label, values in report.by_cardinality.items()
        },
    }


def _percent(value: float) -> str:
    return f"{100.0 * value:.1f}"


def _write_outputs(out_dir: Path, config: RunConfig, report, raw_lines, curve_rows,
                   distribution_rows, correlation_rows, tsv_blocks,
                   backend_names, source_runs) -> None:
    def write_text(name: str, content: str):
        (out_dir / name).write_text(content, encoding="utf-8", newline="\n")

    write_text("report.json", json.dumps(report, indent=2, sort_keys=True,
                                         ensure_ascii=False) + "\n")
    write_text("raw_results.jsonl", "\n".join(raw_lines) + ("\n" if raw_lines else ""))

    table_k = 1 if 1 in config.ks else min(config.ks)
    lines = ["\t".join(["source", "relation", "n_facts"] + backend_names)]
    for source_run in source_runs:
        source_name = source_run.spec.name
        blocks = tsv_blocks[source_name]
        reports = [blocks[name] for name in backend_names]
        relations = [rel.relation_id for rel in reports[0].per_relation]
        for i, relation in enumerate(relations):
            row = [source_name, relation, str(reports[0].per_relation[i].n_facts)]
            row += [_percent(rep.per_relation[i].p_at[table_k]) for rep in reports]
            lines.append("\t".join(row))
        total_facts = sum(rel.n_facts for rel in reports[0].per_relation)
        lines.append("\t".join(
            [source_name, "Total", str(total_facts)]
            + [_percent(rep.macro_p_at[table_k]) for rep in reports]
        ))
        for label in ("1-1", "N-1", "N-M", "?"):
            if label not in reports[0].by_cardinality:
                continue
            class_facts = sum(
                rel.n_facts for rel in reports[0].per_relation
                if _relation_class(source_run, rel.relation_id) == label
            )
            lines.append("\t".join(
                [source_name, label, str(class_facts)]
                + [_percent(rep.by_cardinality[label][table_k]) for rep in reports]
            ))
    write_text(f"report_p_at_{table_k}.tsv", "\n".join(lines) + "\n")

    curve_lines = ["source,backend,k,p_at_k"]
    curve_lines += [f"{s},{b},{k},{v}" for s, b, k, v in curve_rows]
    write_text("pk_curve.csv", "\n".join(curve_lines) + "\n")

    exclusion_lines = ["source\tstage\treason\tcount"]
    for source_name, source_report in report["sources"].items():
        for stage, reasons in source_report["exclusions"].items():
            for reason, count in reasons.items():
                exclusion_lines.append(f"{source_name}\t{stage}\t{reason}\t{count}")
    write_text("exclusions.tsv", "\n".join(exclusion_lines) + "\n")

    if distribution_rows:
        dist_lines = ["source,backend,fact_id,mention_idx,rank"]
        dist_lines += [f"{s},{b},{f},{i},{r}" for s, b, f, i, r in distribution_rows]
        write_text("distribution.csv", "\n".join(dist_lines) + "\n")

    if correlation_rows:
        corr_lines = ["source\tbackend\tfeature\tstatus\tn\tr"]
        for row in correlation_rows:
            r = row.get("r")
            corr_lines.append("\t".join([
                row["source"], row["backend"], row["feature"], row["status"],
                str(row["n"]), "" if r is None else repr(r),
            ]))
        write_text("correlations.tsv", "\n".join(corr_lines) + "\n")


def _relation_class(source_run: _SourceRun, relation_id: str) -> str:
    template = source_run.factset.templates.get(relation_id)
    return template.cardinality.value if template is not None else "?"


# ---------------------------------------------------------------------------
# entry point


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.out is not None:
        config.output_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    return run(config)


def _cmd_validate(args) -> int:
    config = parse_config(args.config)
    diags = validate(config)
    for diag in diags:
        print(diag)
    if not diags:
        print("ok")
    return 1 if diags else 0


def _cmd_report(args) -> int:
    ks = [int(part) for part in args.ks.split(",") if part.strip()]
    grouped: dict[tuple[str, str], list[ranking.RankResult]] = {}
    with open(args.raw, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            result = ranking.RankResult(
                fact_id=record["fact_id"],
                relation_id=record["relation"],
                rank=record["rank"],
                gold_score=record.get("gold_score", 0.0),
                top1_token=record.get("top1_token", ""),
                top1_log_prob=record.get("top1_log_prob"),
                topk_tokens=tuple(record.get("topk_tokens", [])),
                filtered_out=record.get("filtered_out", 0),
            )
            grouped.setdefault((record["source"], record["backend"]), []).append(result)
    output: dict = {}
    for (source_name, backend_name), results in sorted(grouped.items()):
        output.setdefault(source_name, {})[backend_name] = _report_to_json(
            analysis.build_reports(results, ks)
        )
    print(json.dumps(output, indent=2, sort_keys=True, ensure_ascii=False))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("PROBE_LOG", "WARNING").upper(),
                      logging.WARNING)
    )
    parser = argparse.ArgumentParser(
        prog="probe",
        description="Single-token cloze probe: compile queries, score, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the probe end to end")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.set_defaults(func=_cmd_run)

    p_validate = sub.add_parser("validate", help="lint a config file")
    p_validate.add_argument("--config", required=True)
    p_validate.set_defaults(func=_cmd_validate)

    p_report = sub.add_parser("report", help="recompute reports from a raw dump")
    p_report.add_argument("--raw", required=True)
    p_report.add_argument("--ks", required=True, help="comma-separated k values")
    p_report.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BackendUnavailable, VocabMismatch, ProtocolViolation) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 2
    except ProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
