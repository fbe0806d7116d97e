"""Profile fidelity and generator behavior."""

from __future__ import annotations

import pytest

from fgsim.errors import Infeasible
from fgsim.evalstats import ScoredSet, roc_auc
from fgsim.kg import RELATION_SIGNATURES, NodeType, RelationType, split_edges, write_triples
from fgsim.synth import (
    CountryProfile,
    SynthConfig,
    SynthMode,
    block_of,
    default_profiles,
    generate_country_graph,
    profile_by_name,
    read_profile,
    write_profile,
)

REL = RelationType


class TestDefaultProfiles:
    def test_ten_profiles(self):
        assert [p.name for p in default_profiles()] == [
            "BARZIL", "CHINA", "GERMANY", "INDIA", "JAPAN",
            "KOREA", "TAIWAN", "THAILAND", "UK", "USA",
        ]

    def test_uk_profile(self):
        uk = profile_by_name("UK")
        assert (uk.n_company, uk.n_customer, uk.n_product, uk.n_certificate) == (386, 220, 433, 5)
        assert uk.edges_per_relation == {
            REL.SUPPLIES_TO: 1823, REL.BUYS: 7630, REL.MADE_BY: 4114, REL.HAS_CERT: 1022,
        }
        assert uk.total_nodes == 1044
        assert uk.total_edges == 14589

    def test_china_profile(self):
        china = profile_by_name("CHINA")
        assert (china.n_company, china.n_customer, china.n_product, china.n_certificate) == (
            7287, 963, 868, 5,
        )
        assert china.total_edges == 191041

    def test_barzil_profile(self):
        barzil = profile_by_name("BARZIL")
        assert (barzil.n_company, barzil.n_customer, barzil.n_product, barzil.n_certificate) == (
            173, 200, 341, 5,
        )
        assert barzil.edges_per_relation[REL.HAS_CERT] == 504

    def test_thailand_has_four_certificates(self):
        assert profile_by_name("THAILAND").n_certificate == 4

    def test_profile_file_round_trip(self, tmp_path):
        path = tmp_path / "uk.profile"
        write_profile(profile_by_name("UK"), path)
        assert read_profile(path) == profile_by_name("UK")


def tiny_profile(edges: dict | None = None) -> CountryProfile:
    defaults = {REL.SUPPLIES_TO: 40, REL.BUYS: 40, REL.MADE_BY: 40, REL.HAS_CERT: 20}
    defaults.update(edges or {})
    return CountryProfile(
        name="TINY",
        n_company=20,
        n_customer=15,
        n_product=18,
        n_certificate=5,
        edges_per_relation=defaults,
    )


class TestGenerate:
    def test_uk_counts_exact(self):
        kg = generate_country_graph(SynthConfig(profile=profile_by_name("UK"), seed=1))
        assert kg.num_nodes == 1044
        assert kg.num_edges == 14589
        for relation, expected in profile_by_name("UK").edges_per_relation.items():
            assert len(kg.edges_of(relation)) == expected

    def test_same_seed_byte_identical_file(self, tmp_path):
        config = SynthConfig(profile=tiny_profile(), seed=42)
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_triples(generate_country_graph(config), a)
        write_triples(generate_country_graph(config), b)
        assert a.read_bytes() == b.read_bytes()

    def test_schema_valid_and_type_consistent(self):
        kg = generate_country_graph(SynthConfig(profile=tiny_profile(), seed=3))
        for t in kg.edges:
            head_type, tail_type = RELATION_SIGNATURES[t.relation]
            assert kg.types[t.head] is head_type
            assert kg.types[t.tail] is tail_type

    def test_planted_mass_fraction(self):
        # aligned capacity for buys: 240*200/4 = 12000 >= 0.9 * 10000
        profile = CountryProfile(
            name="P",
            n_company=40,
            n_customer=240,
            n_product=200,
            n_certificate=5,
            edges_per_relation={REL.SUPPLIES_TO: 400, REL.BUYS: 10_000,
                                REL.MADE_BY: 400, REL.HAS_CERT: 40},
        )
        config = SynthConfig(
            profile=profile, mode=SynthMode.PLANTED_BLOCKS,
            n_blocks=4, intra_block_prob_mass=0.9, seed=5,
        )
        kg = generate_country_graph(config)
        buys_edges = kg.edges_of(REL.BUYS)
        intra = 0
        for t in buys_edges:
            head_idx = int(kg.labels[t.head].rsplit("_", 1)[1])
            tail_idx = int(kg.labels[t.tail].rsplit("_", 1)[1])
            if block_of(head_idx, 240, 4) == block_of(tail_idx, 200, 4):
                intra += 1
        assert 0.88 <= intra / len(buys_edges) <= 0.92

    def test_infeasible_edge_count(self):
        profile = tiny_profile({REL.HAS_CERT: 101})  # 20 companies x 5 certs = 100
        with pytest.raises(Infeasible):
            generate_country_graph(SynthConfig(profile=profile, seed=0))

    def test_taiwan_profile_is_infeasible_as_published(self):
        # 1029 has_cert edges cannot fit in 186 x 5 = 930 simple-graph pairs
        with pytest.raises(Infeasible, match="has_cert"):
            generate_country_graph(SynthConfig(profile=profile_by_name("TAIWAN"), seed=0))

    def test_planted_requires_two_blocks(self):
        with pytest.raises(ValueError):
            generate_country_graph(
                SynthConfig(profile=tiny_profile(), mode=SynthMode.PLANTED_BLOCKS, n_blocks=1)
            )

    def test_generated_graph_splits_cleanly(self):
        kg = generate_country_graph(SynthConfig(profile=tiny_profile(), seed=9))
        split = split_edges(kg, seed=1)
        assert sum(len(v) for v in split.train.values()) > 0


class TestPlantedSignal:
    def test_block_alignment_classifier_recovers_signal(self):
        """A no-learning classifier scoring block alignment separates held-out
        edges from negatives: the generator plants recoverable structure."""
        profile = CountryProfile(
            name="SIG",
            n_company=50,
            n_customer=100,
            n_product=80,
            n_certificate=5,
            edges_per_relation={REL.SUPPLIES_TO: 500, REL.BUYS: 1500,
                                REL.MADE_BY: 500, REL.HAS_CERT: 50},
        )
        config = SynthConfig(
            profile=profile, mode=SynthMode.PLANTED_BLOCKS,
            n_blocks=5, intra_block_prob_mass=0.9, seed=11,
        )
        kg = generate_country_graph(config)
        split = split_edges(kg, seed=2)
        rel = REL.BUYS
        counts = {NodeType.CUSTOMER: 100, NodeType.PRODUCT: 80}

        def aligned(t) -> float:
            head_idx = int(kg.labels[t.head].rsplit("_", 1)[1])
            tail_idx = int(kg.labels[t.tail].rsplit("_", 1)[1])
            return float(
                block_of(head_idx, counts[kg.types[t.head]], 5)
                == block_of(tail_idx, counts[kg.types[t.tail]], 5)
            )

        positives = split.test[rel]
        negatives = split.negatives[next(iter(split.negatives))][rel]
        scores = [aligned(t) for t in positives] + [aligned(t) for t in negatives]
        labels = [1] * len(positives) + [0] * len(negatives)
        auc = roc_auc(ScoredSet(scores=scores, labels=labels))
        assert auc >= 0.8
