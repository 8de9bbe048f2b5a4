import numpy as np
import pytest

from cuspuni.density import EnsembleSpec, Flat
from cuspuni.ensembles import deformed_wigner, semicircle
from cuspuni.errors import EmptyWindow
from cuspuni.flow import CuspKind, CuspReport
from cuspuni.mc import (EntryLaw, _entries, compare_to_pearcey, compare_two_ensembles, cusp_report,
                        multi_time_snapshot, rescale, rescaled_points, sample, sample_many, sample_matrix, shared_edges,
                        stream, wigner_part)


def semicircle_cdf(x):
    u = np.clip(np.asarray(x) / 2, -1, 1)
    return 0.5 + (u * np.sqrt(1 - u**2) + np.arcsin(u)) / np.pi


def test_streams_are_reproducible_and_distinct():
    a = stream(5, 0).standard_normal(4)
    assert np.array_equal(a, stream(5, 0).standard_normal(4))
    assert not np.array_equal(a, stream(5, 1).standard_normal(4))
    assert not np.array_equal(a, stream(6, 0).standard_normal(4))


@pytest.mark.parametrize("law", list(EntryLaw))
@pytest.mark.parametrize("beta", [1, 2])
def test_entries_have_unit_variance(law, beta):
    x = _entries(stream(1, 9), 200_000, law, beta)
    assert abs(np.mean(x)) < 0.01
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("beta", [1, 2])
def test_wigner_variance_profile(beta):
    N = 6
    S = np.full((N, N), 0.3)
    W = np.array([wigner_part(S, stream(s, 0), EntryLaw.GAUSSIAN, beta) for s in range(4000)])
    assert np.allclose(W, np.conj(np.transpose(W, (0, 2, 1))))
    off = np.mean(np.abs(W[:, 0, 1:]) ** 2)
    diag = np.mean(np.abs(np.diagonal(W, axis1=1, axis2=2)) ** 2)
    assert off == pytest.approx(0.3, rel=0.05)
    assert diag == pytest.approx(2 * 0.3 / beta, rel=0.05)


def test_single_entry_matrix_is_exact():
    spec = EnsembleSpec(np.array([0.7]), Flat(1.0))
    w = wigner_part(spec.variance_matrix(), stream(3, 0), EntryLaw.GAUSSIAN, 1)
    assert sample(spec, 3).eigenvalues[0] == 0.7 + w[0, 0]


def test_sampling_is_deterministic():
    spec = deformed_wigner(30, 0.0)
    assert np.array_equal(sample(spec, 4, 0.1).eigenvalues, sample(spec, 4, 0.1).eigenvalues)


def test_goe_follows_semicircle():
    recs = sample_many(semicircle(500), range(100))
    ev = np.sort(np.concatenate([r.eigenvalues for r in recs]))
    ecdf = np.arange(1, ev.size + 1) / ev.size
    assert np.max(np.abs(ecdf - semicircle_cdf(ev))) <= 0.02


def test_gaussian_increments_compose_in_law():
    spec = deformed_wigner(40, 0.0, beta=1)
    t1, t2 = 0.1, 0.3
    direct = [sample_matrix(spec, s, t2) for s in range(600)]
    two = [multi_time_snapshot(sample(spec, s, t1), [t2 - t1], 10**5 + s)[0].eigenvalues for s in range(600)]
    for k in (2, 4):
        a = np.array([np.sum(np.linalg.eigvalsh(H) ** k) for H in direct])
        b = np.array([np.sum(ev**k) for ev in two])
        se = np.sqrt(a.var() / a.size + b.var() / b.size)
        assert abs(a.mean() - b.mean()) <= 3 * se


def test_zero_times_repeat_the_spectrum():
    rec = sample(deformed_wigner(20, 0.0), 1)
    snaps = multi_time_snapshot(rec, [0.0, 0.0, 0.0], 8)
    assert all(np.array_equal(s.eigenvalues, rec.eigenvalues) for s in snaps)
    with pytest.raises(ValueError):
        multi_time_snapshot(rec, [0.2, 0.1], 8)


def test_snapshot_increments_are_uncorrelated():
    rec = sample(deformed_wigner(4, 0.0, beta=1), 0)
    base = sample_matrix(rec.spec, 0)
    inc = []
    for s in range(3000):
        snaps = multi_time_snapshot(rec, [0.1, 0.2], s)
        inc.append([snaps[0].eigenvalues.sum() - base.trace(), snaps[1].eigenvalues.sum() - snaps[0].eigenvalues.sum()])
    inc = np.array(inc)
    r = np.corrcoef(inc.T)[0, 1]
    assert abs(r) <= 3 / np.sqrt(inc.shape[0])


def test_rescaling_is_linear():
    ev = np.array([-0.01, 0.0, 0.02])
    c = CuspReport(CuspKind.EXACT, 0.001, 1.3)
    x = rescaled_points(ev, c, 100)
    assert np.allclose(rescaled_points(ev, CuspReport(CuspKind.EXACT, 0.001, 2.6), 100), 2 * x)
    shifted = rescaled_points(ev, CuspReport(CuspKind.EXACT, 0.001 + 1e-3, 1.3), 100)
    assert np.allclose(x - shifted, 1.3 * 100**0.75 * 1e-3)


def test_empty_input_is_rejected():
    c = CuspReport(CuspKind.EXACT, 0.0, 1.0)
    with pytest.raises(EmptyWindow):
        rescale([], c)
    rec = sample(semicircle(10), 0)
    with pytest.raises(EmptyWindow):
        rescale([rec], CuspReport(CuspKind.EXACT, 50.0, 1.0))


@pytest.fixture(scope="module")
def cusp_samples():
    N = 300
    spec = deformed_wigner(N, 0.0, beta=2)
    cusp = cusp_report(spec)
    return spec, cusp, sample_many(spec, range(120), cusp=cusp)


def test_exact_cusp_report(cusp_samples):
    _, cusp, _ = cusp_samples
    assert cusp.kind == CuspKind.EXACT and cusp.alpha_pearcey == 0.0
    assert cusp.gamma == pytest.approx(1.0, rel=0.02)
    assert abs(cusp.b) < 1e-6


def test_wrong_pearcey_parameter_is_detected(cusp_samples):
    _, cusp, recs = cusp_samples
    stats = rescale(recs, cusp, 3.0)
    assert stats.counts.sum() > 0 and np.all(stats.counts > 0)
    assert not compare_to_pearcey(stats, cusp.alpha_pearcey + 5.0).passed


def test_standard_errors_shrink_like_inverse_root_count(cusp_samples):
    _, cusp, recs = cusp_samples
    small = rescale(recs[:30], cusp, 3.0, bins=6)
    large = rescale(recs, cusp, 3.0, bins=6)
    assert np.median(large.stderr / small.stderr) == pytest.approx(0.5, rel=0.2)


def test_ensemble_agrees_with_itself(cusp_samples):
    spec, cusp, recs = cusp_samples
    other = sample_many(spec, range(1000, 1120), cusp=cusp)
    a, b = shared_edges(rescale(recs, cusp), rescale(other, cusp))
    assert compare_two_ensembles(a, b).passed


def test_gap_and_minimum_ensembles_differ():
    N = 300
    gap, mn = deformed_wigner(N, -0.15, beta=2), deformed_wigner(N, 0.15, beta=2)
    c = CuspReport(CuspKind.EXACT, 0.0, 1.0)
    a = rescale(sample_many(gap, range(60)), c)
    b = rescale(sample_many(mn, range(60)), c)
    a, b = shared_edges(a, b)
    assert not compare_two_ensembles(a, b).passed
