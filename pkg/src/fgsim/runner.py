"""Configuration-driven experiment runner.

Configs are plain text with dotted keys (``model.d=32``).  Every run seed
derives from (master seed, variant, run index, client index), so any single
run can be reproduced in isolation.  Identical configs produce byte-identical
output files.

Commands map 1:1 onto the CLI and the HTTP service: generate, train,
evaluate, compare, stats.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, EmptyRelation, ParseError
from .evalstats import (
    ExperimentReport,
    MetricPair,
    aggregate_runs,
    evaluate_client,
    per_run_csv_rows,
    significance_payload,
    summary_csv_rows,
)
from .federation import (
    ClientState,
    FederationConfig,
    RoundRecord,
    Variant,
    make_client,
    run_federation,
)
from .kg import (
    KnowledgeGraph,
    RelationType,
    SplitPart,
    load_graph,
    relation_network_stats,
    write_triples,
)
from .nn import load_checkpoint, save_checkpoint
from .sage import Direction
from .seeding import derive_seed
from .synth import (
    CountryProfile,
    SynthConfig,
    SynthMode,
    default_profiles,
    generate_country_graph,
    profile_by_name,
    read_profile,
    write_profile,
)

THREADS_ENV = "FGS_THREADS"


@dataclass(frozen=True)
class ClientSpec:
    name: str
    profile: CountryProfile | None = None
    graph_path: Path | None = None


@dataclass
class RunConfig:
    clients: list[ClientSpec]
    out_dir: Path
    seed: int = 0
    synth_mode: SynthMode = SynthMode.UNIFORM_RANDOM
    n_blocks: int = 4
    intra_mass: float = 0.9
    dim: int = 32
    k_layers: int = 2
    k_sample: int = 10
    learning_rate: float = 0.01
    final_activation: str = "relu"
    rounds: int = 5
    epochs_per_round: int = 10
    finetune_epochs: int | None = None
    delta: float = 0.02
    variants: list[Variant] = field(default_factory=lambda: list(Variant))
    repetitions: int = 20
    negatives_mode: str = "tail"

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ConfigError("run.repetitions must be >= 1")
        if not self.clients:
            raise ConfigError("at least one client must be configured")


def parse_config(
    path: str | Path | None,
    *,
    overrides: dict[str, str] | None = None,
) -> RunConfig:
    """Read dotted key-value config text, then apply CLI overrides."""
    values: dict[str, str] = {}
    if path is not None:
        source = Path(path)
        if not source.exists():
            raise ConfigError(f"config file not found: {source}")
        for lineno, raw in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    values.update(overrides or {})
    return _config_from_values(values)


def _config_from_values(values: dict[str, str]) -> RunConfig:
    def take(key: str, default: str | None = None) -> str | None:
        return values.get(key, default)

    def take_int(key: str, default: int) -> int:
        raw = take(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc

    def take_float(key: str, default: float) -> float:
        raw = take(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from exc

    clients: list[ClientSpec] = []
    names = [n.strip() for n in (take("clients") or "").split(",") if n.strip()]
    for name in names:
        graph_key = f"client.{name}.graph"
        profile_key = f"client.{name}.profile"
        if graph_key in values:
            clients.append(ClientSpec(name=name, graph_path=Path(values[graph_key])))
        elif profile_key in values:
            profile_path = Path(values[profile_key])
            if not profile_path.exists():
                raise ConfigError(f"{profile_key}: file not found: {profile_path}")
            clients.append(ClientSpec(name=name, profile=read_profile(profile_path)))
        else:
            try:
                clients.append(ClientSpec(name=name, profile=profile_by_name(name)))
            except KeyError as exc:
                raise ConfigError(
                    f"client {name!r} has no graph/profile key and no default profile"
                ) from exc
    if not clients:
        raise ConfigError("config must list clients (clients=NAME,NAME,...)")

    mode_raw = take("synth.mode", SynthMode.UNIFORM_RANDOM.value)
    try:
        mode = SynthMode(mode_raw)
    except ValueError as exc:
        raise ConfigError(f"synth.mode must be one of "
                          f"{[m.value for m in SynthMode]}, got {mode_raw!r}") from exc

    variant_raw = take("run.variants")
    if variant_raw:
        try:
            variants = [Variant(v.strip()) for v in variant_raw.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(
                f"run.variants must name variants among {[v.value for v in Variant]}"
            ) from exc
    else:
        variants = list(Variant)

    out_raw = take("run.out")
    if out_raw is None:
        raise ConfigError("run.out (output directory) is required")

    ft_raw = take("train.finetune_epochs")
    return RunConfig(
        clients=clients,
        out_dir=Path(out_raw),
        seed=take_int("run.seed", 0),
        synth_mode=mode,
        n_blocks=take_int("synth.blocks", 4),
        intra_mass=take_float("synth.mass", 0.9),
        dim=take_int("model.d", 32),
        k_layers=take_int("model.k_layers", 2),
        k_sample=take_int("model.k_sample", 10),
        learning_rate=take_float("model.lr", 0.01),
        final_activation=take("model.final_activation", "relu") or "relu",
        rounds=take_int("train.rounds", 5),
        epochs_per_round=take_int("train.epochs", 10),
        finetune_epochs=int(ft_raw) if ft_raw is not None else None,
        delta=take_float("train.delta", 0.02),
        variants=variants,
        repetitions=take_int("run.repetitions", 20),
        negatives_mode=take("split.negatives", "tail") or "tail",
    )


def worker_count() -> int:
    """Worker cap from the FGS_THREADS environment variable (default 1)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if count < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {count}")
    return count


# ---------------------------------------------------------------------------
# Seed derivation (documented contract: any single run is reproducible)


def graph_seed(master: int, client_name: str) -> int:
    return derive_seed(master, "graph", client_name)


def run_client_seed(master: int, variant: Variant, run_index: int, client_index: int) -> int:
    return derive_seed(master, variant.value, run_index, client_index)


# ---------------------------------------------------------------------------
# generate


@dataclass(frozen=True)
class GeneratedGraph:
    client: str
    path: Path
    seed: int
    num_nodes: int
    num_edges: int


def cmd_generate(config: RunConfig) -> list[GeneratedGraph]:
    """Generate one graph file per profile-backed client, plus a manifest."""
    graphs_dir = config.out_dir / "graphs"
    profiles_dir = config.out_dir / "profiles"
    graphs_dir.mkdir(parents=True, exist_ok=True)
    profiles_dir.mkdir(parents=True, exist_ok=True)
    results: list[GeneratedGraph] = []
    for spec in config.clients:
        kg = _client_graph(config, spec, cache={})
        path = graphs_dir / f"{spec.name}.tsv"
        write_triples(kg, path)
        if spec.profile is not None:
            write_profile(spec.profile, profiles_dir / f"{spec.name}.profile")
        results.append(
            GeneratedGraph(
                client=spec.name,
                path=path,
                seed=graph_seed(config.seed, spec.name),
                num_nodes=kg.num_nodes,
                num_edges=kg.num_edges,
            )
        )
    manifest = [
        f"client={r.client} file={r.path.name} seed={r.seed} "
        f"nodes={r.num_nodes} edges={r.num_edges}"
        for r in results
    ]
    (config.out_dir / "manifest.txt").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    return results


def _client_graph(
    config: RunConfig, spec: ClientSpec, cache: dict[str, KnowledgeGraph]
) -> KnowledgeGraph:
    if spec.name in cache:
        return cache[spec.name]
    if spec.graph_path is not None:
        kg = load_graph(spec.graph_path, country_tag=spec.name)
    elif spec.profile is not None:
        try:
            kg = generate_country_graph(
                SynthConfig(
                    profile=spec.profile,
                    mode=config.synth_mode,
                    n_blocks=config.n_blocks,
                    intra_block_prob_mass=config.intra_mass,
                    seed=graph_seed(config.seed, spec.name),
                )
            )
        except Exception as exc:
            raise type(exc)(f"client {spec.name}: {exc}") from exc
    else:
        raise ConfigError(f"client {spec.name}: neither graph path nor profile")
    cache[spec.name] = kg
    return kg


# ---------------------------------------------------------------------------
# stats


STATS_HEADER = (
    "country,relation,num_head_nodes,num_tail_nodes,num_edges,"
    "average_degree,clustering_coefficient,density,closeness,betweenness"
)


def cmd_stats(graph_paths: list[Path]) -> tuple[list[str], list[str]]:
    """Structural-metric rows per (country, relation); returns (rows, warnings)."""
    rows = [STATS_HEADER]
    warnings: list[str] = []
    for path in graph_paths:
        kg = load_graph(path)
        for relation in RelationType:
            try:
                stats = relation_network_stats(kg, relation)
            except EmptyRelation:
                warnings.append(f"{kg.country_tag}: no {relation.value} edges; row omitted")
                continue
            rows.append(
                f"{kg.country_tag},{relation.value},{stats.num_head_nodes},"
                f"{stats.num_tail_nodes},{stats.num_edges},{stats.average_degree:.6f},"
                f"{stats.clustering_coefficient:.6f},{stats.density:.6f},"
                f"{stats.closeness:.6f},{stats.betweenness:.6f}"
            )
    return rows, warnings


# ---------------------------------------------------------------------------
# train / evaluate


def _build_clients(
    config: RunConfig, variant: Variant, run_index: int, cache: dict[str, KnowledgeGraph]
) -> list[ClientState]:
    clients = []
    for client_index, spec in enumerate(config.clients):
        kg = _client_graph(config, spec, cache)
        clients.append(
            make_client(
                spec.name,
                kg,
                dim=config.dim,
                k_layers=config.k_layers,
                k_sample=config.k_sample,
                learning_rate=config.learning_rate,
                final_activation=config.final_activation,
                seed=run_client_seed(config.seed, variant, run_index, client_index),
                split_seed=derive_seed(config.seed, "split", spec.name),
                negatives_mode=config.negatives_mode,
            )
        )
    return clients


def _federation_config(config: RunConfig, variant: Variant) -> FederationConfig:
    return FederationConfig(
        rounds=config.rounds,
        local_epochs_per_round=config.epochs_per_round,
        variant=variant,
        adapfl_delta=config.delta,
        finetune_epochs=config.finetune_epochs,
    )


def _evaluation_rows(clients: list[ClientState]) -> list[str]:
    rows = ["client,relation,split,metric,value"]
    for client in clients:
        for part in (SplitPart.VALID, SplitPart.TEST):
            for relation, pair in sorted(
                evaluate_client(client, part).items(), key=lambda kv: kv[0].value
            ):
                rows.append(
                    f"{client.id},{relation.value},{part.value},roc_auc,{pair.roc_auc:.6f}"
                )
                rows.append(
                    f"{client.id},{relation.value},{part.value},average_precision,"
                    f"{pair.average_precision:.6f}"
                )
    return rows


def _trace_rows(records: list[tuple[Variant, int, RoundRecord]]) -> list[str]:
    relations = [r.value for r in RelationType]
    rows = ["variant,run,round,client,train_loss," + ",".join(f"val_auc_{r}" for r in relations)]
    for variant, run_index, record in records:
        aucs = [
            f"{record.val_auc[rel]:.6f}" if rel in record.val_auc else ""
            for rel in RelationType
        ]
        loss = f"{record.train_loss:.6f}"
        rows.append(
            f"{variant.value},{run_index},{record.round_index},{record.client_id},"
            f"{loss}," + ",".join(aucs)
        )
    return rows


def cmd_train(config: RunConfig) -> Path:
    """Train the first configured variant once (run 0) and save checkpoints."""
    variant = config.variants[0]
    config.out_dir.mkdir(parents=True, exist_ok=True)
    cache: dict[str, KnowledgeGraph] = {}
    clients = _build_clients(config, variant, 0, cache)
    result = run_federation(clients, _federation_config(config, variant))
    ckpt_dir = config.out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for client in result.clients:
        save_checkpoint(client.params.as_dict(), ckpt_dir / f"{client.id}.fgs")
    _write_lines(config.out_dir / "traces.csv", _trace_rows([(variant, 0, r) for r in result.records]))
    _write_lines(config.out_dir / "evaluation.csv", _evaluation_rows(result.clients))
    if result.grouping is not None:
        payload = {
            "groups": [list(g) for g in result.grouping.groups],
            "cross_eval": [[float(x) for x in row] for row in result.grouping.cross_eval],
        }
        (config.out_dir / "grouping.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return config.out_dir


def cmd_evaluate(config: RunConfig, checkpoint_dir: Path | None = None) -> list[str]:
    """Rebuild clients, load checkpoints, and emit evaluation rows."""
    variant = config.variants[0]
    ckpt_dir = checkpoint_dir or (config.out_dir / "checkpoints")
    cache: dict[str, KnowledgeGraph] = {}
    clients = _build_clients(config, variant, 0, cache)
    for client in clients:
        path = ckpt_dir / f"{client.id}.fgs"
        if not path.exists():
            raise ConfigError(f"missing checkpoint for client {client.id}: {path}")
        tensors = load_checkpoint(path)
        client.params = client.params.with_tensors(
            {name: tensors[name] for name in client.params.as_dict()}
        )
    rows = _evaluation_rows(clients)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    _write_lines(config.out_dir / "evaluation.csv", rows)
    return rows


# ---------------------------------------------------------------------------
# compare


@dataclass
class CompareResult:
    report: ExperimentReport
    files: list[Path]


def cmd_compare(config: RunConfig) -> CompareResult:
    """All requested variants x repetitions, with aggregated reports.

    Progress is flushed to ``*.partial`` files as runs finish; final files
    are written (and partials removed) only on completion, so an
    interrupted run leaves clearly marked partial outputs behind.
    """
    config.out_dir.mkdir(parents=True, exist_ok=True)
    cache: dict[str, KnowledgeGraph] = {}
    for spec in config.clients:  # shared, read-only graphs across all runs
        _client_graph(config, spec, cache)

    tasks = [
        (variant, run_index)
        for variant in config.variants
        for run_index in range(config.repetitions)
    ]
    run_metrics: dict[tuple[str, int], dict] = {}
    all_records: dict[tuple[str, int], list[tuple[Variant, int, RoundRecord]]] = {}

    def execute(task: tuple[Variant, int]):
        variant, run_index = task
        clients = _build_clients(config, variant, run_index, cache)
        result = run_federation(clients, _federation_config(config, variant))
        metrics: dict = {}
        for client in result.clients:
            for relation, pair in evaluate_client(client, SplitPart.TEST).items():
                metrics[(client.id, relation.value, variant.value)] = pair
        return task, metrics, [(variant, run_index, r) for r in result.records]

    workers = worker_count()
    try:
        if workers == 1:
            for task in tasks:
                _, metrics, records = execute(task)
                key = (task[0].value, task[1])
                run_metrics[key] = metrics
                all_records[key] = records
                _flush_partial(config, run_metrics, all_records)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for task, metrics, records in pool.map(execute, tasks):
                    key = (task[0].value, task[1])
                    run_metrics[key] = metrics
                    all_records[key] = records
                    _flush_partial(config, run_metrics, all_records)
    except KeyboardInterrupt:
        _flush_partial(config, run_metrics, all_records)
        raise

    ordered_keys = sorted(run_metrics)
    report = aggregate_runs([run_metrics[k] for k in ordered_keys])
    files = _write_reports(config, report, _ordered_records(all_records))
    for partial in _partial_paths(config):
        partial.unlink(missing_ok=True)
    return CompareResult(report=report, files=files)


def _ordered_records(
    all_records: dict[tuple[str, int], list[tuple[Variant, int, RoundRecord]]]
) -> list[tuple[Variant, int, RoundRecord]]:
    merged: list[tuple[Variant, int, RoundRecord]] = []
    for key in sorted(all_records):
        merged.extend(all_records[key])
    return merged


def _partial_paths(config: RunConfig) -> list[Path]:
    return [
        config.out_dir / "metrics.csv.partial",
        config.out_dir / "traces.csv.partial",
    ]


def _flush_partial(config: RunConfig, run_metrics: dict, all_records: dict) -> None:
    ordered = sorted(run_metrics)
    if not ordered:
        return
    report = aggregate_runs([run_metrics[k] for k in ordered])
    _write_lines(config.out_dir / "metrics.csv.partial", per_run_csv_rows(report))
    _write_lines(config.out_dir / "traces.csv.partial", _trace_rows(_ordered_records(all_records)))


def _write_reports(
    config: RunConfig,
    report: ExperimentReport,
    records: list[tuple[Variant, int, RoundRecord]],
) -> list[Path]:
    metrics_path = config.out_dir / "metrics.csv"
    summary_path = config.out_dir / "summary.csv"
    significance_path = config.out_dir / "significance.json"
    traces_path = config.out_dir / "traces.csv"
    _write_lines(metrics_path, per_run_csv_rows(report))
    _write_lines(summary_path, summary_csv_rows(report))
    significance_path.write_text(
        json.dumps(significance_payload(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _write_lines(traces_path, _trace_rows(records))
    return [metrics_path, summary_path, significance_path, traces_path]


def _write_lines(path: Path, rows: list[str]) -> None:
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
