import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from migate import discriminators as disc
from migate import entropy, pid, synthetic
from migate.nn import DenseLayer, DenseNet

LN2 = math.log(2.0)


def constant_logit_net(d_in, logit0):
    """Zero weights, so every input maps to logits (logit0, 0)."""
    return DenseNet([DenseLayer(np.zeros((2, d_in)), np.array([logit0, 0.0]),
                                "identity")])


def unit_gmm(d):
    return entropy.GmmEntropyModel.from_scales(
        [0.0], np.zeros((1, d)), np.eye(d)[None])


def test_pointwise_terms_hand_fixture():
    # unit Gaussians for the entropies, fixed-bias nets for the posteriors
    models = {"V": unit_gmm(1), "T": unit_gmm(1), "J": unit_gmm(2)}
    dset = disc.DiscriminatorSet(constant_logit_net(1, 1.0),
                                 constant_logit_net(1, 0.5),
                                 constant_logit_net(2, 2.0))
    prior = disc.ClassPrior(np.array([0.5, 0.5]))
    x_v, x_t, y = np.array([[2.0]]), np.array([[-1.0]]), np.array([0])
    i_plus, i_minus = pid.pointwise_terms(models, dset, prior, x_v, x_t, y)

    half_l2pi = 0.5 * math.log(2.0 * math.pi)
    h_v = half_l2pi + 2.0
    h_t = half_l2pi + 0.5
    h_j = 2.0 * half_l2pi + 2.5
    assert np.allclose(i_plus[0], [h_v, h_t, h_j], atol=1e-9)

    lp = -LN2
    post = {m: -math.log1p(math.exp(-b))
            for m, b in (("V", 1.0), ("T", 0.5), ("J", 2.0))}
    expected_minus = [h_v + lp - post["V"], h_t + lp - post["T"],
                      h_j + lp - post["J"]]
    assert np.allclose(i_minus[0], expected_minus, atol=1e-9)

    d = pid.decompose(["a"], ["train"], i_plus, i_minus)
    r = min(h_v, h_t) - min(expected_minus[0], expected_minus[1])
    mi_v = i_plus[0, 0] - i_minus[0, 0]
    mi_t = i_plus[0, 1] - i_minus[0, 1]
    mi_j = i_plus[0, 2] - i_minus[0, 2]
    assert np.isclose(d.r[0], r, atol=1e-9)
    assert np.isclose(d.u_v[0], mi_v - r, atol=1e-9)
    assert np.isclose(d.u_t[0], mi_t - r, atol=1e-9)
    assert np.isclose(d.s[0], mi_j - mi_v - mi_t + r, atol=1e-9)


finite_rows = hnp.arrays(np.float64, (7, 3),
                         elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(i_plus=finite_rows, i_minus=finite_rows)
def test_decompose_chain_identities(i_plus, i_minus):
    ids = [f"x{i}" for i in range(7)]
    d = pid.decompose(ids, ["train"] * 7, i_plus, i_minus)
    mi = i_plus - i_minus
    assert np.allclose(d.r, d.r_plus - d.r_minus, atol=1e-12)
    assert np.allclose(d.r + d.u_v, mi[:, 0], atol=1e-12)
    assert np.allclose(d.r + d.u_t, mi[:, 1], atol=1e-12)
    assert np.allclose(d.r + d.u_v + d.u_t + d.s, mi[:, 2], atol=1e-12)
    assert np.all(d.r_plus <= i_plus[:, 0] + 1e-12)
    assert np.all(d.r_plus <= i_plus[:, 1] + 1e-12)


def brute_aggregates(p):
    """Dict-based enumeration, written independently of the library path."""
    nv, nt, ny = p.shape
    pv = [sum(p[v, t, y] for t in range(nt) for y in range(ny)) for v in range(nv)]
    pt = [sum(p[v, t, y] for v in range(nv) for y in range(ny)) for t in range(nt)]
    py = [sum(p[v, t, y] for v in range(nv) for t in range(nt)) for y in range(ny)]
    pvt = [[sum(p[v, t, y] for y in range(ny)) for t in range(nt)] for v in range(nv)]
    pvy = [[sum(p[v, t, y] for t in range(nt)) for y in range(ny)] for v in range(nv)]
    pty = [[sum(p[v, t, y] for v in range(nv)) for y in range(ny)] for t in range(nt)]
    acc = [0.0, 0.0, 0.0, 0.0]
    for v in range(nv):
        for t in range(nt):
            for y in range(ny):
                if p[v, t, y] == 0.0:
                    continue
                ip = (-math.log(pv[v]), -math.log(pt[t]), -math.log(pvt[v][t]))
                im = (-math.log(pvy[v][y] / py[y]), -math.log(pty[t][y] / py[y]),
                      -math.log(p[v, t, y] / py[y]))
                r = min(ip[0], ip[1]) - min(im[0], im[1])
                uv = (ip[0] - im[0]) - r
                ut = (ip[1] - im[1]) - r
                s = (ip[2] - im[2]) - r - uv - ut
                for i, val in enumerate((r, uv, ut, s)):
                    acc[i] += p[v, t, y] * val
    return acc


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_oracle_matches_independent_enumeration(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.01, 1.0, size=(2, 2, 2))
    p /= p.sum()
    dist = pid.DiscreteJointDistribution([0, 1], [0, 1], [0, 1], p)
    res = pid.exact_oracle(dist)
    expected = brute_aggregates(p)
    got = [res.aggregates.r, res.aggregates.u_v, res.aggregates.u_t,
           res.aggregates.s]
    assert np.allclose(got, expected, atol=1e-12)
    assert len(res.outcomes) == 8
    total = sum(o.probability for o in res.outcomes)
    assert np.isclose(total, 1.0, atol=1e-12)


GATE_TARGETS = {
    "xor": (0.0, 0.0, 0.0, LN2),
    "copy": (LN2, 0.0, 0.0, 0.0),
    "unique_v": (0.0, LN2, 0.0, 0.0),
    "unique_v_noise": (LN2, 0.0, -LN2, LN2),
}


@pytest.mark.parametrize("gate", sorted(GATE_TARGETS))
def test_gate_oracle_frozen_targets(gate):
    res = pid.exact_oracle(synthetic.gate_distribution(gate))
    got = (res.aggregates.r, res.aggregates.u_v, res.aggregates.u_t,
           res.aggregates.s)
    assert np.allclose(got, GATE_TARGETS[gate], atol=1e-12)


def test_noise_bit_ambiguity_goes_negative_unclamped():
    res = pid.exact_oracle(synthetic.gate_distribution("unique_v_noise"))
    assert res.aggregates.u_t < -0.69
    # pointwise too: no outcome is clamped toward zero
    assert all(o.u_t < -0.69 for o in res.outcomes)


def test_captioned_oracle_frozen_targets():
    res = pid.exact_oracle(synthetic.captioned_distribution("xor"))
    got = (res.aggregates.r, res.aggregates.u_v, res.aggregates.u_t,
           res.aggregates.s)
    assert np.allclose(got, (0.0, 0.0, LN2, 0.0), atol=1e-12)
    res = pid.exact_oracle(synthetic.captioned_distribution("unique_v"))
    got = (res.aggregates.r, res.aggregates.u_v, res.aggregates.u_t,
           res.aggregates.s)
    assert np.allclose(got, (LN2, 0.0, 0.0, 0.0), atol=1e-12)


def test_oracle_invariant_under_relabeling():
    rng = np.random.default_rng(9)
    p = rng.uniform(0.01, 1.0, size=(3, 2, 2))
    p /= p.sum()
    base = pid.exact_oracle(pid.DiscreteJointDistribution(
        list("abc"), [0, 1], [0, 1], p)).aggregates
    perm = [2, 0, 1]
    shuffled = pid.exact_oracle(pid.DiscreteJointDistribution(
        [list("abc")[i] for i in perm], [0, 1], [0, 1], p[perm])).aggregates
    for key, val in base.as_dict().items():
        assert np.isclose(shuffled.as_dict()[key], val, atol=1e-12)


def test_oracle_modality_swap_symmetry():
    rng = np.random.default_rng(10)
    p = rng.uniform(0.01, 1.0, size=(2, 3, 2))
    p /= p.sum()
    fwd = pid.exact_oracle(pid.DiscreteJointDistribution(
        [0, 1], [0, 1, 2], [0, 1], p)).aggregates
    swp = pid.exact_oracle(pid.DiscreteJointDistribution(
        [0, 1, 2], [0, 1], [0, 1], p.transpose(1, 0, 2))).aggregates
    assert np.isclose(fwd.r, swp.r, atol=1e-12)
    assert np.isclose(fwd.s, swp.s, atol=1e-12)
    assert np.isclose(fwd.u_v, swp.u_t, atol=1e-12)
    assert np.isclose(fwd.u_t, swp.u_v, atol=1e-12)


def test_distribution_validation():
    with pytest.raises(ValueError, match="shape"):
        pid.DiscreteJointDistribution([0, 1], [0], [0], np.ones((2, 2, 1)) / 4)
    with pytest.raises(ValueError, match="negative"):
        pid.DiscreteJointDistribution([0], [0], [0, 1],
                                      np.array([[[1.5, -0.5]]]))
    with pytest.raises(ValueError, match="sum"):
        pid.DiscreteJointDistribution([0], [0], [0, 1],
                                      np.array([[[0.3, 0.3]]]))


def test_relative_change_reference_values():
    before = pid.AggregateInteractions(r=0.0553, u_v=1.0, u_t=-2.0, s=0.0)
    after = pid.AggregateInteractions(r=0.2319, u_v=1.5, u_t=-1.0, s=0.7)
    out = pid.relative_change(before, after)
    assert abs(out["R"] - 319.349) < 0.01
    assert np.isclose(out["U_V"], 50.0)
    # negative baseline: change is measured against its magnitude
    assert np.isclose(out["U_T"], 50.0)
    assert out["S"] is None


def test_aggregate_split_filter_and_weights():
    i_plus = np.array([[1.0, 2.0, 3.0], [4.0, 2.0, 6.0], [0.5, 0.25, 1.0]])
    i_minus = np.zeros((3, 3))
    d = pid.decompose(["a", "b", "c"], ["train", "val", "train"], i_plus, i_minus)
    full = pid.aggregate(d)
    assert np.isclose(full.r, np.mean([1.0, 2.0, 0.25]))
    val_only = pid.aggregate(d, split="val")
    assert np.isclose(val_only.r, 2.0)
    weighted = pid.aggregate(d, weights=np.array([1.0, 1.0, 2.0]))
    assert np.isclose(weighted.r, (1.0 + 2.0 + 2 * 0.25) / 4.0)
    with pytest.raises(ValueError, match="split"):
        pid.aggregate(d, split="test")


def test_decomposition_csv_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    i_plus = rng.uniform(-3, 3, size=(5, 3))
    i_minus = rng.uniform(-3, 3, size=(5, 3))
    d = pid.decompose([f"s{i}" for i in range(5)], ["train"] * 5, i_plus, i_minus)
    path = str(tmp_path / "dec.csv")
    pid.write_decomposition_csv(d, path)
    back = pid.read_decomposition_csv(path)
    assert back.sample_ids == d.sample_ids
    for field in ("r_plus", "r_minus", "r", "u_v", "u_t", "s"):
        assert np.allclose(getattr(back, field), getattr(d, field), rtol=1e-8)
    # 9 significant digits means a second write of the read-back is identical
    path2 = str(tmp_path / "dec2.csv")
    pid.write_decomposition_csv(back, path2)
    with open(path) as a, open(path2) as b:
        assert a.read() == b.read()


def test_decomposition_csv_missing_column(tmp_path):
    path = str(tmp_path / "bad.csv")
    with open(path, "w") as fh:
        fh.write("sample_id,r_plus,r_minus,r,u_V,u_T\n")
        fh.write("a,1,1,0,0,0\n")
    with pytest.raises(ValueError, match="missing columns"):
        pid.read_decomposition_csv(path)


def test_aggregates_json_round_trip(tmp_path):
    agg = pid.AggregateInteractions(r=0.6931, u_v=-0.25, u_t=0.0, s=1.5)
    path = str(tmp_path / "agg.json")
    pid.write_aggregates_json(agg, path)
    back = pid.read_aggregates_json(path)
    assert back == agg
