"""Attack construction and black-box filtering against victim sketches."""

import statistics

import pytest

from hllguard.attacks import (
    MODEL_INFLATION,
    MODEL_M1,
    MODEL_M2,
    UNKNOWN_FINGERPRINT,
    AttackSet,
    AttackSetFormatError,
    BlackBoxSketch,
    OracleBudget,
    TemplateExhaustedError,
    craft_inflation,
    craft_m1,
    filter_m2,
    flow_candidates,
    load_attack_set,
    save_attack_set,
    word_candidates,
)
from hllguard.hashing import split_seed
from hllguard.sketch import HashConfig, Sketch, alpha_m, config_fingerprint, hash_element


class TestCraftM1:
    def test_all_elements_rank_one(self):
        cfg = HashConfig(index_seed=9, value_seed=9)
        attack = craft_m1(cfg, 10, count=400)
        assert attack.true_cardinality == 400
        assert all(hash_element(e, cfg, 10).value == 1 for e in attack.elements)

    def test_metadata(self):
        cfg = HashConfig()
        attack = craft_m1(cfg, 10, count=50)
        assert attack.model == MODEL_M1
        assert attack.target_config_known is True
        assert attack.fingerprint == config_fingerprint(cfg, 10)

    def test_elements_distinct(self):
        attack = craft_m1(HashConfig(), 8, count=1000)
        assert len(set(attack.elements)) == 1000

    def test_candidate_consumption_near_double(self):
        # rank 1 occurs with probability 1/2, so crafting n elements should
        # inspect about 2n candidates
        counter = {"n": 0}

        def counted():
            for e in flow_candidates(seed=5):
                counter["n"] += 1
                yield e

        craft_m1(HashConfig(), 10, count=2000, template=counted())
        assert 1.8 * 2000 < counter["n"] < 2.2 * 2000

    def test_evasion_effect_small_scale(self):
        # estimate stays under the small-range crossover no matter the true size
        cfg = HashConfig(index_seed=2, value_seed=3)
        for size in (1000, 10_000, 100_000):
            sk = Sketch(10, cfg)
            sk.insert_many(craft_m1(cfg, 10, count=size).elements)
            assert sk.estimate() <= 2.5 * 1024

    def test_salt_defeats_attack(self):
        cfg = HashConfig()
        attack = craft_m1(cfg, 10, count=10_000)
        salted = Sketch(10, HashConfig(salt=split_seed(99, 0)))
        salted.insert_many(attack.elements)
        sigma = 1.04 / 32  # m = 1024
        assert abs(salted.estimate() / 10_000 - 1) < 5 * sigma

    def test_known_seed_required_not_guessed(self):
        # crafting against one config does not evade a different-seed victim
        crafted_for = HashConfig(index_seed=1, value_seed=1)
        attack = craft_m1(crafted_for, 10, count=10_000)
        other = Sketch(10, HashConfig(index_seed=77, value_seed=77))
        other.insert_many(attack.elements)
        assert abs(other.estimate() / 10_000 - 1) < 5 * (1.04 / 32)


class TestCraftInflation:
    def test_ranks_meet_minimum(self):
        cfg = HashConfig(index_seed=4, value_seed=4)
        attack = craft_inflation(cfg, 12, min_rank=6, budget=4000)
        assert attack.model == MODEL_INFLATION
        assert len(attack.elements) > 0
        assert all(hash_element(e, cfg, 12).value >= 6 for e in attack.elements)

    def test_yield_scales_with_rank_probability(self):
        # P(rank >= r) = 2^-(r-1); budget 8192 at r=6 gives mean 256
        attack = craft_inflation(HashConfig(), 12, min_rank=6, budget=8192)
        assert 150 < len(attack.elements) < 380

    def test_inflates_estimate(self):
        # enough rank-10 hits to cover all 256 registers: the reading escapes
        # the small-range correction and lands at roughly alpha*m*2^10
        cfg = HashConfig()
        attack = craft_inflation(cfg, 8, min_rank=10, budget=1_000_000)
        sk = Sketch(8, cfg)
        sk.insert_many(attack.elements)
        assert sk.estimate() > 2.5 * 256  # past the correction crossover
        assert sk.estimate() > 8 * attack.true_cardinality

    def test_flow_template_route(self):
        cfg = HashConfig(index_seed=8, value_seed=8)
        attack = craft_inflation(
            cfg, 10, min_rank=4, budget=2000, template=flow_candidates(seed=3)
        )
        assert all(hash_element(e, cfg, 10).value >= 4 for e in attack.elements)
        assert all(len(e) == 14 for e in attack.elements)  # IPv4 flow encoding

    def test_min_rank_validation(self):
        with pytest.raises(ValueError):
            craft_inflation(HashConfig(), 10, min_rank=0, budget=100)
        with pytest.raises(ValueError):
            craft_inflation(HashConfig(), 10, min_rank=56, budget=100)  # cap is 55


class TestCandidates:
    def test_flow_candidates_deterministic_distinct(self):
        a = [next(iter_a) for iter_a in [flow_candidates(seed=1)] for _ in range(3000)]
        b_iter = flow_candidates(seed=1)
        b = [next(b_iter) for _ in range(3000)]
        assert a == b
        assert len(set(a)) == 3000

    def test_word_candidates_shape(self):
        words = word_candidates(seed=0, budget=128)
        assert words.shape == (128,)
        assert len(set(words.tolist())) == 128


class TestFilterM2:
    def make_factory(self, precision=8):
        cfg = HashConfig(index_seed=6, value_seed=6)
        return lambda: BlackBoxSketch(Sketch(precision, cfg))

    def test_round_accounting(self):
        candidates = [bytes([i % 256, i // 256, 7]) for i in range(3000)]
        result = filter_m2(self.make_factory(), candidates, rounds=2)
        assert len(result.rounds) == 2
        first, second = result.rounds
        assert first.candidates == 3000
        assert second.candidates == first.retained
        assert result.attack_set.true_cardinality == second.retained
        # every candidate inserted once per filtering round plus the probe re-measure
        expected_inserts = 3000 + first.retained + (first.retained + second.retained)
        assert result.budget.insert_calls == expected_inserts

    def test_retention_strictly_filters(self):
        candidates = [i.to_bytes(4, "little") for i in range(5000)]
        result = filter_m2(self.make_factory(), candidates, rounds=3)
        kept = [r.retained for r in result.rounds]
        assert 0 < kept[2] <= kept[1] <= kept[0] < 5000

    def test_attack_set_is_black_box(self):
        result = filter_m2(self.make_factory(), [b"a", b"b", b"c"], rounds=1)
        assert result.attack_set.model == MODEL_M2
        assert result.attack_set.target_config_known is False
        assert result.attack_set.fingerprint == UNKNOWN_FINGERPRINT

    def test_suppresses_estimate_versus_clean(self):
        candidates = [i.to_bytes(4, "little") for i in range(40_000)]
        result = filter_m2(self.make_factory(precision=9), candidates, rounds=3)
        final = result.rounds[-1]
        clean = Sketch(9, HashConfig(index_seed=6, value_seed=6))
        clean.insert_many(candidates[: final.retained])
        # same true cardinality, much lower reading than an unfiltered stream
        assert final.fresh_estimate < 0.55 * clean.estimate()
        assert final.ratio < 0.55

    def test_ratio_monotone_over_rounds_median(self):
        # statistical property: median over seeds of round-over-round ratio drops
        drops_1_2, drops_2_3 = [], []
        for seed in range(10):
            candidates = [w.tobytes() for w in word_candidates(seed, 30_000)]
            result = filter_m2(self.make_factory(precision=11), candidates, rounds=3)
            r1, r2, r3 = (r.ratio for r in result.rounds)
            drops_1_2.append(r1 - r2)
            drops_2_3.append(r2 - r3)
        assert statistics.median(drops_1_2) > 0
        assert statistics.median(drops_2_3) > 0

    def test_rejects_duplicate_candidates(self):
        with pytest.raises(ValueError):
            filter_m2(self.make_factory(), [b"x", b"x"], rounds=1)

    def test_rejects_zero_rounds(self):
        with pytest.raises(ValueError):
            filter_m2(self.make_factory(), [b"x"], rounds=0)


class TestBlackBoxSketch:
    def test_exposes_only_oracle_surface(self):
        box = BlackBoxSketch(Sketch(8))
        assert box.insert(b"e") is True
        assert box.insert(b"e") is False
        assert box.estimate() > 0
        assert not hasattr(box, "registers")
        assert not hasattr(box, "to_bytes")


class TestAttackSetIo:
    def test_round_trip(self, tmp_path):
        attack = craft_m1(HashConfig(index_seed=3), 10, count=200)
        path = tmp_path / "attack.hex"
        save_attack_set(attack, path)
        again = load_attack_set(path)
        assert again == attack

    def test_header_fields(self, tmp_path):
        import json

        attack = craft_m1(HashConfig(), 10, count=5)
        path = tmp_path / "attack.hex"
        save_attack_set(attack, path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header["count"] == 5
        assert header["model"] == MODEL_M1
        assert header["config_fingerprint"] == attack.fingerprint

    def test_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.hex"
        path.write_text('{"count": 3, "model": "m1", "config_fingerprint": "00"}\nab\n')
        with pytest.raises(AttackSetFormatError, match="count"):
            load_attack_set(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.hex"
        path.write_text("abcd\n")
        with pytest.raises(AttackSetFormatError, match="line 1"):
            load_attack_set(path)

    def test_bad_hex_line_reported(self, tmp_path):
        path = tmp_path / "bad.hex"
        path.write_text('{"count": 2, "model": "m1", "config_fingerprint": "00"}\nab\nxyz!\n')
        with pytest.raises(AttackSetFormatError, match="line 3"):
            load_attack_set(path)


class TestAttackSetModel:
    def test_distinctness_enforced(self):
        with pytest.raises(ValueError):
            AttackSet(
                elements=(b"a", b"a"),
                target_config_known=True,
                model=MODEL_M1,
                fingerprint="0" * 16,
            )

    def test_template_exhaustion_error_type(self):
        # finite candidate template shorter than the request
        with pytest.raises(TemplateExhaustedError):
            craft_m1(HashConfig(), 10, count=100, template=iter([b"only-one"]))

    def test_oracle_budget_totals(self):
        budget = OracleBudget()
        assert budget.insert_calls == 0
        assert budget.estimate_calls == 0
