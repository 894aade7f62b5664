import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsasym.expansion import (REJECT_MESSAGE, ExpansionError, SequenceSpec, convert_pre_unitary,
                              extract_expansion, read_expansion, synthesize_sequence, verify_expansion)
from nsasym.field import SpectralField, z_inner
from nsasym.modes import enumerate_modes

MS = enumerate_modes(3, 4)
GEOMETRIC_SUBSET = np.unique(np.round(np.geomspace(1, 1000, 60)).astype(int)) - 1


def unit(seed):
    f = SpectralField.random(MS, np.random.default_rng(seed))
    return f / f.znorm()


def orthonormal_pair(seed):
    a, b = unit(seed), unit(seed + 1)
    b = b - z_inner(b, a) * a
    return a, b / b.znorm()


def single_mode_unit():
    return SpectralField.from_modes(MS, {(1, 0, 0): [0, 1, 0]})


def closed_form_gamma(n, k):
    """Gamma_{k,n} = 2^k prod_{p<=k} sin(2^-p / n) for v_n = e^{i/n}."""
    out = np.ones_like(n, dtype=float)
    for p in range(1, k + 1):
        out *= 2 * np.sin(2.0**-p / n)
    return out


def test_constant_sequence_is_trivial():
    v = unit(0)
    exp = extract_expansion([v] * 10, 2)
    assert exp.kind == "trivial" and exp.depth == 0
    assert verify_expansion(exp, [v] * 10).levels == []


def test_synthesize_without_terms_is_constant():
    v = unit(0)
    seq = synthesize_sequence(SequenceSpec(v, [], np.arange(1, 6)))
    assert all(np.array_equal(x.coeffs, v.coeffs) for x in seq)


def test_harmonic_sequence_is_finite():
    v, w = orthonormal_pair(3)
    n = np.arange(1, 201)
    seq = synthesize_sequence(SequenceSpec(v, [(lambda n: 1.0 / n, w)], n))
    exp = extract_expansion(seq, 2, limit_policy="given", limits=[v])
    assert exp.kind == "finite" and exp.depth == 1
    np.testing.assert_allclose(exp.Gamma(1), 1.0 / n[exp.retained_indices], rtol=1e-12)
    assert (exp.directions[0] - w).znorm() <= 1e-12
    # with the last-element proxy the differences shrink to 1/n - 1/200, so only rounding remains
    last = extract_expansion(seq, 1)
    assert (last.directions[0] - w).znorm() <= 1e-9
    assert verify_expansion(exp, seq).ok


def exp_i_over_n(n):
    e = single_mode_unit()
    seq = [np.exp(1j / k) * e for k in n]
    limits = [e, 1j * e, -e, -1j * e]
    return e, seq, limits


def test_exp_i_over_n_gamma_and_directions():
    n = np.arange(1, 1001)
    e, seq, limits = exp_i_over_n(n)
    exp = extract_expansion(seq, 3, limit_policy="given", limits=limits)
    assert exp.depth == 3
    for k in range(1, 4):
        # relative error grows like eps / Gamma_k; the contract is on absolute values
        assert np.abs(exp.Gamma(k) - closed_form_gamma(n[exp.retained_indices], k)).max() <= 1e-12
        assert (exp.directions[k - 1] - (1j) ** k * e).znorm() == 0
    rep = verify_expansion(exp, seq, rtol=1e-12)
    assert rep.ok, rep.failures


def test_tampered_direction_fails_verification():
    n = np.arange(1, 101)
    _, seq, limits = exp_i_over_n(n)
    exp = extract_expansion(seq, 3, limit_policy="given", limits=limits)
    exp.levels[1].w = 1.01 * exp.levels[1].w
    rep = verify_expansion(exp, seq)
    assert any(f.startswith("level 2") for f in rep.failures)
    assert not any(f.startswith("level 1") for f in rep.failures)


def two_scale_sequence(seed=5):
    v = unit(seed + 10)
    w1, w2 = orthonormal_pair(seed)
    n = np.arange(1, 1001)
    seq = synthesize_sequence(SequenceSpec(v, [(lambda n: 1.0 / n, w1), (lambda n: n**-3.0, w2)], n))
    return v, w1, w2, seq


@pytest.mark.parametrize("policy", ["last", "given"])
def test_two_scale_round_trip(policy):
    v, w1, w2, seq = two_scale_sequence()
    kw = dict(limits=[v]) if policy == "given" else {}
    exp = extract_expansion(seq, 2, limit_policy=policy, subset=GEOMETRIC_SUBSET, **kw)
    assert exp.depth == 2
    assert (exp.directions[0] - w1).znorm() <= 1e-4
    assert (exp.directions[1] - w2).znorm() <= 1e-4
    assert verify_expansion(exp, seq).ok


def test_subsequence_stability():
    v, w1, w2, seq = two_scale_sequence(7)
    a = extract_expansion(seq, 2, limit_policy="given", limits=[v], subset=GEOMETRIC_SUBSET)
    b = extract_expansion(seq, 2, limit_policy="given", limits=[v], subset=GEOMETRIC_SUBSET, stride=2)
    for x, y in zip(a.directions, b.directions):
        assert (x - y).znorm() <= 1e-4


def test_second_order_example_needs_exact_limit():
    # v_n = (1/n) w1 + (1/n^2) w2 over a long geometric range with the exact limit
    w1, w2 = orthonormal_pair(11)
    n = np.geomspace(1, 1e7, 150)
    zero = SpectralField.zeros(MS)
    seq = synthesize_sequence(SequenceSpec(zero, [(lambda n: 1.0 / n, w1), (lambda n: n**-2.0, w2)], n))
    exp = extract_expansion(seq, 2, limit_policy="given", limits=[zero])
    assert (exp.directions[0] - w1).znorm() <= 1e-6
    assert (exp.directions[1] - w2).znorm() <= 1e-6


def test_alternating_sequence_is_rejected():
    v, w = orthonormal_pair(2)
    n = np.arange(1, 1001)
    seq = synthesize_sequence(SequenceSpec(v, [(lambda n: (-1.0) ** n / n, w)], n))
    exp = extract_expansion(seq, 1)
    assert exp.depth == 0 and exp.kind == "truncated"
    assert exp.diagnostic == f"level 1 rejected: {REJECT_MESSAGE}"


@given(st.integers(0, 1000), st.integers(2, 4))
def test_reconstruction_identity(seed, p):
    v, w1 = orthonormal_pair(seed)
    w2 = unit(seed + 50)
    n = np.arange(1, 61)
    seq = synthesize_sequence(SequenceSpec(v, [(lambda n: 1.0 / n, w1), (lambda n: n**-float(p), w2)], n))
    exp = extract_expansion(seq, 2)
    for lv in exp.levels:
        for pos in lv.indices[::7]:
            assert (exp.reconstruct(int(pos), lv.k) - seq[int(pos)]).znorm() <= 1e-12
        assert abs(lv.w.znorm() - 1) <= 1e-12
        assert all(abs(d.znorm() - 1) <= 1e-12 for d, z in zip(lv.directions, lv.padded) if not z)


def test_growing_ratios_rejected_by_synthesis():
    v, w = orthonormal_pair(0)
    spec = SequenceSpec(v, [(lambda n: n**-3.0, w), (lambda n: 1.0 / n, v)], np.arange(1, 20))
    with pytest.raises(ExpansionError, match="do not decay"):
        synthesize_sequence(spec)


def test_input_validation():
    v = unit(0)
    with pytest.raises(ExpansionError):
        extract_expansion([v] * 5, 2)
    with pytest.raises(ExpansionError):
        extract_expansion([v] * 10, 1, limit_policy="given")
    with pytest.raises(ExpansionError):
        extract_expansion([], 0)


def test_convert_pre_unitary():
    w = unit(4)
    n = np.arange(1, 11)
    v = unit(9)
    exp = convert_pre_unitary(v, [(1.0 / n, 3 * w)])
    np.testing.assert_allclose(exp.Gamma(1), 3.0 / n, rtol=1e-15)
    assert abs(exp.directions[0].znorm() - 1) <= 1e-15
    for r in range(len(n)):
        assert (exp.reconstruct(r, 1) - (v + (3.0 / n[r]) * w)).znorm() <= 1e-14
    assert convert_pre_unitary(v, []).kind == "trivial"
    with pytest.raises(ExpansionError, match="zero direction"):
        convert_pre_unitary(v, [(1.0 / n, SpectralField.zeros(MS))])


def test_dump_round_trip(tmp_path):
    n = np.arange(1, 101)
    _, seq, limits = exp_i_over_n(n)
    alphas = 10.0 * n
    exp = extract_expansion(seq, 3, limit_policy="given", limits=limits, alphas=alphas)
    exp.write(tmp_path)
    header = (tmp_path / "gamma.csv").read_text().splitlines()[0]
    assert header == "n,alpha,gamma1,gamma2,gamma3"
    back = read_expansion(tmp_path, MS)
    assert back.depth == 3 and back.kind == exp.kind
    np.testing.assert_array_equal(back.alphas, alphas[exp.retained_indices])
    for k in range(1, 4):
        np.testing.assert_allclose(back.Gamma(k), exp.Gamma(k), rtol=1e-14)
        np.testing.assert_array_equal(back.directions[k - 1].coeffs, exp.directions[k - 1].coeffs)


def test_read_missing_expansion(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_expansion(tmp_path)


def test_sinusoidal_branch_expansion(sinusoidal_expansion):
    exp = sinusoidal_expansion
    assert exp.depth == 2 and exp.kind == "truncated"
    g1 = exp.Gamma(1)
    assert g1[-1] < g1[0]
    assert np.median(exp.Gamma(2) / g1) < 1
