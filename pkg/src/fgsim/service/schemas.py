"""Pydantic request/response models for the HTTP service.

Requests mirror the runner's RunConfig; conversion lives here so the CLI
and the service share one configuration surface.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field

from ..errors import ConfigError
from ..federation import Variant
from ..runner import ClientSpec, RunConfig
from ..synth import SynthMode, profile_by_name, read_profile


class ClientSpecModel(BaseModel):
    name: str
    graph_path: str | None = None
    profile_path: str | None = None


class RunRequest(BaseModel):
    clients: list[ClientSpecModel]
    out_dir: str
    seed: int = 0
    synth_mode: Literal["uniform", "planted"] = "uniform"
    n_blocks: int = 4
    intra_mass: float = 0.9
    dim: int = 32
    k_layers: int = 2
    k_sample: int = 10
    learning_rate: float = 0.01
    final_activation: Literal["relu", "identity"] = "relu"
    rounds: int = 5
    epochs_per_round: int = 10
    finetune_epochs: int | None = None
    delta: float = 0.02
    variants: list[str] = Field(default_factory=lambda: [v.value for v in Variant])
    repetitions: int = 20
    negatives_mode: Literal["tail", "head", "both"] = "tail"

    def to_run_config(self) -> RunConfig:
        specs: list[ClientSpec] = []
        for client in self.clients:
            if client.graph_path is not None:
                specs.append(ClientSpec(name=client.name, graph_path=Path(client.graph_path)))
            elif client.profile_path is not None:
                specs.append(
                    ClientSpec(name=client.name, profile=read_profile(client.profile_path))
                )
            else:
                try:
                    specs.append(ClientSpec(name=client.name, profile=profile_by_name(client.name)))
                except KeyError as exc:
                    raise ConfigError(
                        f"client {client.name!r}: no graph/profile and no default profile"
                    ) from exc
        try:
            variants = [Variant(v) for v in self.variants]
        except ValueError as exc:
            raise ConfigError(
                f"variants must be among {[v.value for v in Variant]}"
            ) from exc
        return RunConfig(
            clients=specs,
            out_dir=Path(self.out_dir),
            seed=self.seed,
            synth_mode=SynthMode(self.synth_mode),
            n_blocks=self.n_blocks,
            intra_mass=self.intra_mass,
            dim=self.dim,
            k_layers=self.k_layers,
            k_sample=self.k_sample,
            learning_rate=self.learning_rate,
            final_activation=self.final_activation,
            rounds=self.rounds,
            epochs_per_round=self.epochs_per_round,
            finetune_epochs=self.finetune_epochs,
            delta=self.delta,
            variants=variants,
            repetitions=self.repetitions,
            negatives_mode=self.negatives_mode,
        )


def run_request_from_config(config: RunConfig) -> RunRequest:
    """Inverse of ``to_run_config`` for thin clients that parsed a file."""
    clients = []
    for spec in config.clients:
        if spec.graph_path is not None:
            clients.append(ClientSpecModel(name=spec.name, graph_path=str(spec.graph_path)))
        else:
            clients.append(ClientSpecModel(name=spec.name))
    return RunRequest(
        clients=clients,
        out_dir=str(config.out_dir),
        seed=config.seed,
        synth_mode=config.synth_mode.value,
        n_blocks=config.n_blocks,
        intra_mass=config.intra_mass,
        dim=config.dim,
        k_layers=config.k_layers,
        k_sample=config.k_sample,
        learning_rate=config.learning_rate,
        final_activation=config.final_activation,
        rounds=config.rounds,
        epochs_per_round=config.epochs_per_round,
        finetune_epochs=config.finetune_epochs,
        delta=config.delta,
        variants=[v.value for v in config.variants],
        repetitions=config.repetitions,
        negatives_mode=config.negatives_mode,
    )


class HealthResponse(BaseModel):
    status: str
    version: str


class ProfileResponse(BaseModel):
    name: str
    n_company: int
    n_customer: int
    n_product: int
    n_certificate: int
    edges: dict[str, int]
    total_nodes: int
    total_edges: int


class GeneratedGraphModel(BaseModel):
    client: str
    path: str
    seed: int
    num_nodes: int
    num_edges: int


class GenerateResponse(BaseModel):
    graphs: list[GeneratedGraphModel]
    manifest_path: str


class StatsRequest(BaseModel):
    graph_paths: list[str]


class StatsResponse(BaseModel):
    rows: list[str]
    warnings: list[str]


class TrainResponse(BaseModel):
    out_dir: str
    checkpoints: list[str]


class EvaluateRequest(BaseModel):
    run: RunRequest
    checkpoint_dir: str | None = None


class EvaluateResponse(BaseModel):
    rows: list[str]


class CompareRequest(BaseModel):
    run: RunRequest
    background: bool = False


class CompareResponse(BaseModel):
    files: list[str]
    summary: list[str]


class JobSubmitted(BaseModel):
    job_id: str


class JobStatus(BaseModel):
    job_id: str
    status: Literal["running", "done", "failed"]
    error: str | None = None
    files: list[str] = Field(default_factory=list)
