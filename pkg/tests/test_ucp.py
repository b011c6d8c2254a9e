import itertools

import numpy as np
import pytest

from robustq.errors import DimensionError
from robustq.qubo import evaluate, index_block
from robustq.ucp import (
    UcpInstance,
    UcpObjective,
    UcpSchedule,
    UcpUnit,
    UcpWeights,
    check_feasible,
    decode_ucp,
    encode_schedule,
    encode_ucp,
    ucp_objective,
)


def single(mingen=2.0, maxgen=2.0, minup=1, mindown=1, T=1, step=1.0, varcost=3.0, startcost=5.0):
    return UcpInstance((UcpUnit(varcost, startcost, mingen, maxgen, minup, mindown, step),), T)


def milp_logic_ok(on, start, minup, mindown):
    """Literal MILP constraints, 1-based, pre-horizon state off, windows truncated."""
    T = len(on)
    o = lambda t: on[t - 1] if t >= 1 else 0
    s = lambda t: start[t - 1]
    for t in range(1, T + 1):
        if o(t) - o(t - 1) > s(t):
            return False
        window = range(t, min(T, t - 1 + minup) + 1)
        if sum(o(tau) for tau in window) < s(t) * len(window):
            return False
        lhs = sum(s(tau) for tau in range(max(1, t + 1 - mindown), t + 1))
        if lhs > 1 - o(t - mindown):
            return False
    return True


class TestInstance:
    def test_bit_count_formula(self):
        assert UcpUnit(1, 1, 2, 10, step=1).num_bits == 4
        assert UcpUnit(1, 1, 2, 2).num_bits == 0
        assert UcpUnit(1, 1, 1, 4).num_bits == 2
        assert UcpUnit(1, 1, 0, 7, step=0.5).num_bits == 4

    def test_validation(self):
        with pytest.raises(ValueError):
            UcpInstance((UcpUnit(1, 1, 3, 2),), 2)
        with pytest.raises(ValueError):
            UcpInstance((UcpUnit(1, 1, 1, 2, minup=3),), 2)

    def test_json_round_trip(self):
        inst = UcpInstance((UcpUnit(1, 2, 1, 4, 2, 1, 1), UcpUnit(0.5, 0, 0, 3, 1, 2, 0.5)), 3)
        assert UcpInstance.from_dict(inst.to_dict()) == inst


class TestEncode:
    def test_single_feasible_point(self):
        inst = single()
        q, enc = encode_ucp(inst, [2])
        x = [0] * q.num_vars
        x[enc.on[0, 0]] = 1
        x[enc.start[0, 0]] = 1
        penalty = sum(evaluate(enc.parts[k], x) for k in ("demand", "link", "start", "minup", "mindown"))
        assert penalty == 0
        assert evaluate(q, x) == 3.0 * 2 + 5.0

    def test_empty_schedule(self):
        q, _ = encode_ucp(single(), [0])
        assert evaluate(q, [0] * q.num_vars) == 0

    def test_errors(self):
        with pytest.raises(DimensionError):
            encode_ucp(single(T=2), [1])
        with pytest.raises(ValueError):
            encode_ucp(single(), [1], UcpWeights(demand=-1))

    def test_layout_disjoint_and_contiguous(self):
        inst = UcpInstance((UcpUnit(1, 1, 1, 4), UcpUnit(1, 1, 2, 2)), 3)
        q, enc = encode_ucp(inst, [1, 2, 3])
        idx = list(enc.on.ravel()) + list(enc.start.ravel()) + [int(v) for g in enc.gen for v in g.ravel()]
        assert sorted(idx) == list(range(q.num_vars))
        assert enc.num_bits == (2, 0)

    def test_parts_sum_to_qubo(self, rng):
        inst = UcpInstance((UcpUnit(1, 2, 1, 4, 2, 2), UcpUnit(0.7, 1, 1, 2, 1, 1)), 3)
        q, enc = encode_ucp(inst, [2.5, 3.0, 1.0])
        for x in index_block(0, 1 << q.num_vars, q.num_vars)[rng.integers(0, 1 << q.num_vars, 200)]:
            total = sum(evaluate(p, x) for p in enc.parts.values())
            assert evaluate(q, x) == pytest.approx(total, abs=1e-9)

    def test_penalty_vanishes_exactly_on_feasible_set(self):
        inst = UcpInstance((UcpUnit(1.0, 2.0, 1, 2, 2, 1), UcpUnit(0.5, 1.0, 2, 2, 1, 2)), 3)
        demand = [2.0, 3.0, 1.0]
        q, enc = encode_ucp(inst, demand)
        logic = enc.logic_penalty()
        n = q.num_vars
        for x in index_block(0, 1 << n, n):
            s = decode_ucp(enc, inst, x)
            feasible = not check_feasible(inst, s)
            det, mis = ucp_objective(inst, s, demand, 1.0)
            exact_demand = mis == 0
            zero = evaluate(logic, x) == 0
            assert zero == feasible
            if feasible:
                assert evaluate(q, x) == pytest.approx(det + mis, abs=1e-9)
                assert (evaluate(enc.parts["demand"], x) == 0) == exact_demand

    def test_logic_penalty_zero_on_overshoot(self):
        # lattice {1, 2, 3, 4, 5, 6, 7, 8} overshoots maxgen 5: decode does not clip
        inst = single(mingen=1, maxgen=5, T=1)
        q, enc = encode_ucp(inst, [0])
        x = [0] * q.num_vars
        x[enc.on[0, 0]] = x[enc.start[0, 0]] = 1
        for k in range(3):
            x[enc.gen[0][0, k]] = 1
        s = decode_ucp(enc, inst, x)
        assert s.power[0, 0] == 8
        assert evaluate(enc.logic_penalty(), x) == 0
        assert [v.kind for v in check_feasible(inst, s)] == ["power_bounds"]


class TestDecode:
    def test_all_zero(self):
        inst = UcpInstance((UcpUnit(1, 1, 1, 4), UcpUnit(1, 1, 2, 2)), 2)
        q, enc = encode_ucp(inst, [0, 0])
        s = decode_ucp(enc, inst, [0] * q.num_vars)
        assert not s.on.any() and not s.start.any() and not s.power.any()

    def test_formula(self):
        inst = single(mingen=2, maxgen=9)
        q, enc = encode_ucp(inst, [5])
        x = [0] * q.num_vars
        x[enc.on[0, 0]] = 1
        x[enc.gen[0][0, 0]] = 1
        x[enc.gen[0][0, 1]] = 1
        assert decode_ucp(enc, inst, x).power[0, 0] == 5

    def test_roundtrip_on_feasible_set(self):
        inst = UcpInstance((UcpUnit(1, 1, 1, 4, 2, 2), UcpUnit(1, 1, 2, 3, 1, 1)), 3)
        q, enc = encode_ucp(inst, [1, 1, 1])
        feasible = UcpObjective(inst, enc).feasible_set()
        assert len(feasible) > 0
        for x in feasible:
            s = decode_ucp(enc, inst, x)
            assert not check_feasible(inst, s)
            assert encode_schedule(enc, inst, s) == tuple(int(v) for v in x)
            assert decode_ucp(enc, inst, encode_schedule(enc, inst, s)) == s

    def test_length_mismatch(self):
        q, enc = encode_ucp(single(), [1])
        with pytest.raises(DimensionError):
            decode_ucp(enc, single(), [0])


def schedule_from_on(inst, on):
    on = np.array(on, dtype=int).reshape(inst.num_steps, inst.num_units)
    prev = np.vstack([np.zeros((1, inst.num_units), dtype=int), on[:-1]])
    start = on * (1 - prev)
    power = on * np.array([u.mingen for u in inst.units])
    return UcpSchedule(on, start, power.astype(float))


class TestCheckFeasible:
    def test_all_off(self):
        inst = single(T=3, minup=2, mindown=2)
        assert check_feasible(inst, schedule_from_on(inst, [0, 0, 0])) == []

    def test_minup_violation(self):
        inst = single(T=3, minup=2)
        violations = check_feasible(inst, schedule_from_on(inst, [1, 0, 1]))
        assert [(v.kind, v.t) for v in violations] == [("minup", 1)]

    def test_start_logic(self):
        inst = single(T=2)
        s = UcpSchedule(np.array([[1], [1]]), np.array([[0], [0]]), np.array([[2.0], [2.0]]))
        assert [v.kind for v in check_feasible(inst, s)] == ["start"]

    def test_power_when_off(self):
        inst = single(T=1)
        s = UcpSchedule(np.array([[0]]), np.array([[0]]), np.array([[1.0]]))
        assert [v.kind for v in check_feasible(inst, s)] == ["power_off"]

    @pytest.mark.parametrize("minup,mindown", [(1, 1), (2, 1), (1, 2), (2, 3), (3, 2), (4, 4)])
    def test_matches_literal_constraints(self, minup, mindown):
        inst = single(T=4, minup=minup, mindown=mindown)
        for on in itertools.product((0, 1), repeat=4):
            s = schedule_from_on(inst, on)
            ok = milp_logic_ok(list(on), [int(v) for v in s.start[:, 0]], minup, mindown)
            assert (check_feasible(inst, s) == []) == ok, on

    @pytest.mark.parametrize("minup,mindown", [(2, 1), (1, 2), (3, 3)])
    def test_arbitrary_start_patterns(self, minup, mindown):
        # start-logic equality is stricter than the MILP inequality: extra starts are rejected
        inst = single(T=3, minup=minup, mindown=mindown)
        for on in itertools.product((0, 1), repeat=3):
            for st in itertools.product((0, 1), repeat=3):
                s = UcpSchedule(np.array(on)[:, None], np.array(st)[:, None], 2.0 * np.array(on)[:, None])
                derived = [on[t] * (1 - (on[t - 1] if t else 0)) for t in range(3)]
                expected = list(st) == derived and milp_logic_ok(list(on), list(st), minup, mindown)
                assert (check_feasible(inst, s) == []) == expected

    def test_vectorized_mask_agrees(self):
        inst = UcpInstance((UcpUnit(1, 1, 1, 2, 2, 2), UcpUnit(1, 1, 2, 2, 1, 3)), 3)
        q, enc = encode_ucp(inst, [0, 0, 0])
        obj = UcpObjective(inst, enc)
        bits = index_block(0, 1 << q.num_vars, q.num_vars)
        mask = obj.feasible_mask(bits)
        for x, m in zip(bits, mask):
            assert m == (check_feasible(inst, decode_ucp(enc, inst, x)) == [])
        structured = {tuple(r) for r in obj.feasible_set()}
        assert structured == {tuple(r) for r in bits[mask]}


class TestObjective:
    def test_exact_match(self):
        inst = single()
        s = UcpSchedule(np.array([[1]]), np.array([[1]]), np.array([[2.0]]))
        assert ucp_objective(inst, s, [2.0], 1.0) == (11.0, 0.0)

    def test_all_off_mismatch(self):
        inst = single()
        s = UcpSchedule(np.array([[0]]), np.array([[0]]), np.array([[0.0]]))
        assert ucp_objective(inst, s, [3.0], 1.0) == (0.0, 9.0)

    def test_lambda_scales_only_mismatch(self):
        inst = single(T=2)
        s = schedule_from_on(inst, [1, 1])
        d1, m1 = ucp_objective(inst, s, [1.0, 4.0], 1.0)
        d2, m2 = ucp_objective(inst, s, [1.0, 4.0], 7.0)
        assert d1 == d2 and m2 == pytest.approx(7 * m1)

    def test_objective_adapter_matches(self):
        inst = UcpInstance((UcpUnit(1, 2, 1, 4, 2, 1), UcpUnit(0.5, 1, 2, 2, 1, 2)), 3)
        q, enc = encode_ucp(inst, [2, 3, 4], UcpWeights(demand=2.0))
        obj = UcpObjective(inst, enc)
        scen = np.array([[2.0, 3.0, 4.0], [1.0, 5.0, 2.5]])
        X = obj.feasible_set()
        vals = obj.values(X, scen)
        for x, row in zip(X, vals):
            s = decode_ucp(enc, inst, x)
            for k in range(2):
                det, mis = ucp_objective(inst, s, scen[k], 2.0)
                assert row[k] == pytest.approx(det + mis, abs=1e-12)
            assert evaluate(q, x) == pytest.approx(row[0], abs=1e-9)

    def test_schedule_csv(self):
        inst = single(T=2)
        text = schedule_from_on(inst, [1, 0]).to_csv()
        assert text.splitlines() == ["t,unit,on,start,power", "0,0,1,1,2.0", "1,0,0,0,0.0"]
