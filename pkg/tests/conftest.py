"""Shared fixtures and tiny-graph builders."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fgsim.kg import NodeType, RelationType, build_graph

COMPANY = NodeType.COMPANY
CUSTOMER = NodeType.CUSTOMER
PRODUCT = NodeType.PRODUCT
CERTIFICATE = NodeType.CERTIFICATE


def supplies(company: str, customer: str):
    return (company, COMPANY, RelationType.SUPPLIES_TO, customer, CUSTOMER)

def buys(customer: str, product: str):
    return (customer, CUSTOMER, RelationType.BUYS, product, PRODUCT)

def made_by(product: str, company: str):
    return (product, PRODUCT, RelationType.MADE_BY, company, COMPANY)

def has_cert(company: str, certificate: str):
    return (company, COMPANY, RelationType.HAS_CERT, certificate, CERTIFICATE)


def bipartite_supplies(n_companies: int, n_customers: int, skip: set[tuple[int, int]] = frozenset()):
    """Complete bipartite supplies_to graph minus the given (i, j) pairs."""
    triples = [
        supplies(f"c{i}", f"u{j}")
        for i in range(n_companies)
        for j in range(n_customers)
        if (i, j) not in skip
    ]
    return build_graph(triples, country_tag="bipartite")


def sparse_supply_graph(n_companies: int = 10, n_customers: int = 30, per_company: int = 10):
    """supplies_to graph with n_companies*per_company edges and ample non-edges.

    All customers are interned through a small buys relation so the
    candidate space really is n_companies x n_customers.
    """
    triples = [
        supplies(f"c{i}", f"u{j}") for i in range(n_companies) for j in range(per_company)
    ]
    triples += [buys(f"u{j}", f"p{j % 4}") for j in range(n_customers)]
    return build_graph(triples, country_tag="sparse")


def planted_profile(scale: float = 1.0):
    from fgsim.kg import RelationType as R
    from fgsim.synth import CountryProfile

    return CountryProfile(
        name="PLANTED",
        n_company=30,
        n_customer=30,
        n_product=30,
        n_certificate=5,
        edges_per_relation={
            R.SUPPLIES_TO: int(120 * scale),
            R.BUYS: int(120 * scale),
            R.MADE_BY: int(120 * scale),
            R.HAS_CERT: int(40 * scale),
        },
    )


def planted_kg(seed: int = 0, scale: float = 1.0):
    from fgsim.synth import SynthConfig, SynthMode, generate_country_graph

    return generate_country_graph(
        SynthConfig(
            profile=planted_profile(scale),
            mode=SynthMode.PLANTED_BLOCKS,
            n_blocks=3,
            intra_block_prob_mass=0.9,
            seed=seed,
        )
    )


def planted_client(client_id: str = "A", *, graph_seed: int = 0, seed: int = 0, **overrides):
    from fgsim.federation import make_client

    options = dict(dim=16, k_layers=2, k_sample=10, learning_rate=0.01)
    options.update(overrides)
    return make_client(client_id, planted_kg(graph_seed), seed=seed, **options)


@pytest.fixture
def small_kg():
    """Every relation present with >= 3 edges and plenty of non-edges."""
    triples = [
        supplies("c0", "u0"),
        supplies("c0", "u1"),
        supplies("c1", "u1"),
        supplies("c1", "u2"),
        supplies("c2", "u3"),
        supplies("c3", "u0"),
        buys("u0", "p0"),
        buys("u1", "p0"),
        buys("u1", "p1"),
        buys("u2", "p2"),
        buys("u3", "p3"),
        made_by("p0", "c0"),
        made_by("p1", "c1"),
        made_by("p2", "c2"),
        made_by("p3", "c3"),
        has_cert("c0", "x0"),
        has_cert("c1", "x1"),
        has_cert("c2", "x2"),
        has_cert("c3", "x0"),
    ]
    return build_graph(triples, country_tag="TINY")
