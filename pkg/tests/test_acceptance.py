"""Acceptance criteria 1-12, one test each.

Sizes and tolerances come from ``acceptance.toml`` next to this file. Every
test records a PASS/FAIL line that pytest prints in its terminal summary.
"""

import math
import time
from pathlib import Path

import numpy as np
from scipy import stats

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from curriculum_lab import cli
from curriculum_lab import estimators as est
from curriculum_lab.counterexamples import build_hinge_low_psi, build_theorem3
from curriculum_lab.curriculum import PolicyTag, Pool, SchedulePolicy, ScoreLaw, build_pool, race, run_training
from curriculum_lab.errors import UndefinedNabla
from curriculum_lab.geometry import HingeFrame
from curriculum_lab.losses import Kind, Problem, grad_check
from curriculum_lab.samplers import draw_psi_regression, hinge_x2_marginal
from curriculum_lab.verify import lambda_clause_point_mass, random_density
from curriculum_lab.vecspace import LabeledExample, RngStream, StandardGaussian, UniformBox

with open(Path(__file__).with_name("acceptance.toml"), "rb") as fh:
    CFG = tomllib.load(fh)
Z = CFG["z"]


def root(criterion: int) -> RngStream:
    return RngStream(CFG["seed"], stream_id=criterion)


def regression_frame(dim, lam):
    w_bar = np.zeros(dim + 1)
    w_bar[0] = 1.0
    zen = np.zeros(dim + 1)
    zen[0] = 1.0
    return w_bar, w_bar - lam * zen


def test_c01_regression_oracle(acceptance):
    c = CFG["c1_regression_oracle"]
    rng = root(1)
    start = time.perf_counter()
    worst = 0.0
    for a, dim in enumerate(c["dims"]):
        dist = StandardGaussian(dim)
        for i, lam in enumerate(c["lam"]):
            w_bar, w_t = regression_frame(dim, lam)
            mom = est.moment_oracle(dist, w_bar, w_t, 0.0, c["n"], rng.substream(a, i, 0))
            for j, psi in enumerate(c["psi"]):
                mc = est.mc_delta_regression(dist, w_bar, w_t, psi, c["eta"], c["n"], rng.substream(a, i, j + 1))
                closed = est.closed_delta_regression(mom, psi, lam, c["eta"])
                se = math.hypot(mc.std_error, est.closed_delta_regression_se(mom, psi, lam, c["eta"]))
                worst = max(worst, abs(mc.mean - closed) / se)
    elapsed = time.perf_counter() - start
    ok = worst <= Z and elapsed < c["max_seconds"]
    assert acceptance(1, ok, f"regression oracle: max |z| = {worst:.2f}, {elapsed:.0f}s")


def test_c02_global_score(acceptance):
    c = CFG["c2_global_score"]
    rng = root(2)
    max_deriv, verdicts, min_z = -math.inf, set(), math.inf
    for a, dim in enumerate(c["dims"]):
        dist = StandardGaussian(dim)
        for i, lam in enumerate(c["lam"]):
            w_bar, w_t = regression_frame(dim, lam)
            mom = est.moment_oracle(dist, w_bar, w_t, 0.0, c["n"], rng.substream(a, i, 0))
            max_deriv = max(max_deriv, *(est.d_delta_d_psi(mom, p, c["eta"]) for p in c["psi"]))
            curve = est.mc_delta_regression_curve(dist, w_bar, w_t, c["psi"], c["eta"], c["n"], rng.substream(a, i, 1))
            probe = est.monotonicity_probe(curve, Z)
            verdicts.add(probe.verdict)
            min_z = min(min_z, *(abs(z) for z in probe.conclusive_z))
    ok = max_deriv <= 0 and verdicts == {est.Verdict.DECREASING} and min_z >= Z
    assert acceptance(2, ok, f"global-score monotonicity: max dDelta/dpsi = {max_deriv + 0.0:.3g}, "
                             f"verdicts {sorted(v.value for v in verdicts)}, min conclusive |z| = {min_z:.1f}")


def test_c03_lambda_clause(acceptance):
    c = CFG["c3_lambda_clause"]
    pm = lambda_clause_point_mass()
    w_bar, w_t = regression_frame(2, 1.0)
    mom = est.moment_oracle(pm, w_bar, w_t, 0.0, 0, root(3))
    bound = est.eta_bound(mom)
    above, below = (est.d_delta_d_lambda(mom, c["lam"], f * bound) for f in c["eta_factors"])
    tol = c["tolerance"]
    ok = above < -tol and below > tol
    assert acceptance(3, ok, f"lambda clause: eta_bound = {bound:.6g}, dDelta/dlambda = {above:.4g} above, "
                             f"{below:.4g} below")


def test_c04_local_uniform(acceptance):
    c = CFG["c4_local_uniform"]
    rng = root(4)
    start = time.perf_counter()
    box = UniformBox(2, c["half_width"])
    w_bar, w_t = regression_frame(2, 1.0)
    f = est.zenith_density(box, w_bar, w_t)
    closed_ok, zs = True, []
    for i, psi in enumerate(c["psi"]):
        nab = [est.nabla(f, psi, u, 1.0) for u in c["upsilon"]]
        closed = [est.closed_delta_regression_local(psi, u, c["eta"], v) for u, v in zip(c["upsilon"], nab)]
        closed_ok &= all(v == 0 for v in nab) and all(b > a for a, b in zip(closed, closed[1:]))
        mc = [est.mc_delta_regression_local(box, w_bar, w_t, psi, u, c["eta"], c["n"], rng.substream(i, k))
              for k, u in enumerate(c["upsilon"])]
        zs += [(b.mean - a.mean) / math.hypot(a.std_error, b.std_error) for a, b in zip(mc, mc[1:])]
    elapsed = time.perf_counter() - start
    ok = closed_ok and min(zs) >= Z and elapsed < c["max_seconds"]
    assert acceptance(4, ok, f"local score, uniform marginal: closed form increasing = {closed_ok}, "
                             f"min slope z = {min(zs):.1f}, {elapsed:.0f}s")


def test_c05_nabla(acceptance):
    c = CFG["c5_nabla"]
    rng = root(5)
    worst, evaluated = 0.0, 0
    for i in range(c["tuples"]):
        sub = rng.substream(i)
        f = random_density(sub)
        psi, ups = sub.gen.uniform(0, 3, 2)
        lam = float(sub.gen.uniform(0.1, 3))
        try:
            v = est.nabla(f, float(psi), float(ups), lam)
        except UndefinedNabla:
            continue
        evaluated += 1
        worst = max(worst, abs(v))
    spot = est.nabla(stats.norm().pdf, 1.0, 1.0, 1.0)
    ok = worst <= c["bound"] and abs(spot - c["spot"]) <= c["spot_tolerance"]
    assert acceptance(5, ok, f"nabla: max |nabla| = {worst:.6f} over {evaluated} tuples, Gaussian spot = {spot:.6f}")


def test_c06_local_witness(acceptance):
    c = CFG["c6_local_witness"]
    start = time.perf_counter()
    w_bar = np.zeros(c["dim"] + 1)
    w_bar[0] = 1.0
    rep = build_theorem3(StandardGaussian(c["dim"]), w_bar, c["upsilon"], c["eta"], root(6), n=c["n"])
    elapsed = time.perf_counter() - start
    m = rep.measurements
    expected_bound = -2 * c["eta"] ** 2 * c["upsilon"] ** 2 * m["m_r2"]
    ok = (
        rep.verdict
        and rep.parameters["delta"] <= c["max_delta"]
        and m["delta_upsilon"] < expected_bound + Z * m["delta_upsilon_se"]
        and elapsed < c["max_seconds"]
    )
    assert acceptance(6, ok, f"local-difficulty witness: delta = {rep.parameters['delta']:g}, "
                             f"rate = {m['delta_upsilon']:.3e} vs bound {expected_bound:.3e}, {elapsed:.0f}s")


def test_c07_hinge_oracle(acceptance):
    c = CFG["c7_hinge_oracle"]
    rng = root(7)
    dist = StandardGaussian(c["dim"])
    lo, hi = c["ratio"]
    ok, worst, ratios = True, 0.0, []
    for i, theta in enumerate(c["theta"]):
        fr = HingeFrame.from_angle(theta)
        for j, psi in enumerate(c["psi"]):
            resid = [est.mc_hinge_curvature_residual(dist, fr, psi, e, c["n"], rng.substream(i, j, k))
                     for k, e in enumerate(c["etas"])]
            C = abs(resid[0].mean) / c["etas"][0] ** 2
            quad = est.quad_delta_hinge(hinge_x2_marginal(dist, psi), fr, psi, 1.0)
            for k, eta in enumerate(c["etas"]):
                mc = est.mc_delta_hinge(dist, fr, psi, eta, c["n"], rng.substream(i, j, 10 + k))
                gap = abs(mc.mean - eta * quad)
                slack = Z * mc.std_error + C * eta**2
                ok &= gap <= slack
                worst = max(worst, gap / slack)
            if abs(resid[1].mean) > Z * resid[1].std_error:
                ratios.append(resid[0].mean / resid[1].mean)
    ok &= bool(ratios) and all(lo <= r <= hi for r in ratios)
    assert acceptance(7, ok, f"hinge oracle: max gap/slack = {worst:.2f}, halving ratios in "
                             f"[{min(ratios):.2f}, {max(ratios):.2f}] over {len(ratios)} cells")


def test_c08_hinge_global(acceptance):
    c = CFG["c8_hinge_global"]
    rng = root(8)
    dist = StandardGaussian(c["dim"])
    verdicts, quad_ok = {}, True
    for i, theta in enumerate(c["theta"]):
        fr = HingeFrame.from_angle(theta)
        grid = np.linspace(1 - fr.cos_theta, 2.0, c["points"] + 1)[1:]
        curve = [(p, est.mc_delta_hinge(dist, fr, p, c["eta"], c["n"], rng.substream(i, k)))
                 for k, p in enumerate(grid)]
        quad = [est.quad_delta_hinge(hinge_x2_marginal(dist, p), fr, p, c["eta"]) for p in grid]
        quad_ok &= all(b < a for a, b in zip(quad, quad[1:]))
        verdicts[round(theta, 4)] = est.monotonicity_probe(curve, Z).verdict
    rep = build_hinge_low_psi(HingeFrame.from_angle(c["low_theta"]), c["psi1"], c["psi2"], rng.substream(99))
    m = rep.measurements
    low_ok = rep.verdict and m["delta_psi1_quad"] == 0.0 and m["delta_psi2_mc"] > Z * m["delta_psi2_se"]
    ok = quad_ok and all(v is est.Verdict.DECREASING for v in verdicts.values()) and low_ok
    assert acceptance(8, ok, f"hinge global score: verdicts {[v.value for v in verdicts.values()]}, "
                             f"low-psi rates {m['delta_psi1_mc']:g} and {m['delta_psi2_mc']:.3e} "
                             f"(z = {m['delta_psi2_mc'] / m['delta_psi2_se']:.1f})")


def test_c09_hinge_local(acceptance):
    c = CFG["c9_hinge_local"]
    rng = root(9)
    dist = StandardGaussian(c["dim"])
    psi, u, h, eta = c["psi"], c["upsilon"], c["h"], c["eta"]
    zs = []
    for i, theta in enumerate(c["theta"]):
        fr = HingeFrame.from_angle(theta)
        lo = est.mc_delta_hinge_local(dist, fr, psi, u - h, eta, c["n"], rng.substream(i, 0))
        hi = est.mc_delta_hinge_local(dist, fr, psi, u + h, eta, c["n"], rng.substream(i, 1))
        slope = (hi.mean - lo.mean) / (2 * h)
        se = math.hypot(hi.std_error, lo.std_error) / (2 * h)
        target = eta * fr.cos_theta
        zs.append(abs(slope - target) / se if se > 0 else (0.0 if slope == target else math.inf))
    right = HingeFrame.from_angle(math.pi / 2)
    closed_slope = (est.closed_delta_hinge_local(psi, u + h, right, eta)
                    - est.closed_delta_hinge_local(psi, u - h, right, eta)) / (2 * h)
    ok = max(zs) <= Z and abs(closed_slope) <= c["closed_tolerance"]
    assert acceptance(9, ok, f"hinge local score: slope |z| = {[round(z, 2) for z in zs]}, "
                             f"closed-form slope at right angle = {closed_slope:g}")


def test_c10_norm_invariance(acceptance):
    c = CFG["c10_norm_invariance"]
    rng = root(10)
    d, A, steps = c["dim"], c["A"], c["steps"]
    w_bar = np.zeros(d + 1)
    w_bar[0] = 1.0
    pool = build_pool(StandardGaussian(d), w_bar, c["pool_size"], ScoreLaw("half_normal", 1.0), rng.substream(0),
                      Kind.HINGE)
    w0 = rng.substream(1).gen.standard_normal(d + 1)
    w0 /= np.linalg.norm(w0)
    big = Pool(pool.kind, pool.X, pool.y, pool.psi, A * w_bar)
    worst = 0.0
    for tag in PolicyTag:
        pol = SchedulePolicy(tag, horizon=steps)
        a = run_training(Problem(Kind.HINGE, c["eta"], A), pol, big, A * w0, steps, rng.substream(2), loss_every=0)
        b = run_training(Problem(Kind.HINGE, c["eta"] / A**2, 1.0), pol, big.rescaled(A), w0, steps,
                         rng.substream(2), loss_every=0)
        assert len(a) == len(b) == steps + 1
        worst = max(worst, float(np.max(np.abs(a.metric - b.metric))))
    ok = worst <= c["tolerance"]
    assert acceptance(10, ok, f"norm invariance: max cosine gap = {worst:.2e} over {steps} steps, all policies")


def test_c11_race(acceptance):
    c = CFG["c11_race"]
    rng = root(11)
    start = time.perf_counter()
    dist = StandardGaussian(c["dim"])
    law = ScoreLaw("half_normal", c["score_scale"])
    checkpoint = int(c["checkpoint_fraction"] * c["horizon"])

    def setup(sub):
        w_bar = sub.gen.standard_normal(dist.dim + 1)
        return build_pool(dist, w_bar, c["pool_size"], law, sub, Kind.REGRESSION), np.zeros(dist.dim + 1)

    policies = {t.value: SchedulePolicy(t, horizon=c["horizon"])
                for t in (PolicyTag.CURRICULUM_GLOBAL, PolicyTag.ANTI_CURRICULUM)}
    seeds = [int(rng.substream(s).gen.integers(2**63)) for s in range(c["seeds"])]
    res = race(Problem(Kind.REGRESSION, c["eta"]), policies, setup, checkpoint, seeds, checkpoint)
    test = res.compare(PolicyTag.CURRICULUM_GLOBAL.value, PolicyTag.ANTI_CURRICULUM.value)
    elapsed = time.perf_counter() - start
    ok = test.p_value < c["alpha"] and elapsed < c["max_seconds"]
    assert acceptance(11, ok, f"curriculum race: {test.wins}/{test.trials} wins at step {checkpoint}, "
                              f"p = {test.p_value:.2e}, {elapsed:.0f}s")


SWEEP_TOML = "[mc]\nn = 20000\n[grid]\npsi = [0.5, 1.0]\nupsilon = [0.5]\n"
RACE_TOML = "[race]\nseeds = 3\npool_size = 200\nsteps = 50\nhorizon = 500\n"


def test_c12_hygiene(acceptance, tmp_path):
    c = CFG["c12_hygiene"]
    rng = root(12)
    g = rng.substream(0).gen
    worst = 0.0
    for _ in range(c["grad_trials"]):
        x = np.append(g.standard_normal(3), 1.0)
        w = g.standard_normal(4)
        worst = max(worst, grad_check(Problem(Kind.REGRESSION, 0.1), LabeledExample(x, float(g.normal())), w))
        w /= np.linalg.norm(w)
        y = float(g.choice([-1.0, 1.0]))
        if abs(1 - (x @ w) * y) > 1e-3:
            worst = max(worst, grad_check(Problem(Kind.HINGE, 0.1), LabeledExample(x, y), w))

    identical = True
    for command, text in (("sweep", SWEEP_TOML), ("race", RACE_TOML), ("counterexample", "")):
        cfg = tmp_path / f"{command}.toml"
        cfg.write_text(text)
        outs = []
        for run, jobs in enumerate(("1", "2")):
            out = tmp_path / f"{command}{run}"
            assert cli.main([command, "--config", str(cfg), "--out", str(out), "--jobs", jobs]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        identical &= outs[0] == outs[1]

    dist = StandardGaussian(2)
    w_bar, _ = regression_frame(2, 1.0)
    b = draw_psi_regression(dist, w_bar, 1.0, rng.substream(1), c["ks_n"])
    u = b.X @ w_bar
    ks = stats.ks_2samp(u[b.branch > 0], u[b.branch < 0])
    ok = worst < c["grad_tolerance"] and identical and ks.pvalue >= c["ks_alpha"]
    assert acceptance(12, ok, f"hygiene: max gradient rel. error = {worst:.1e}, byte-identical outputs = "
                              f"{identical}, branch KS p = {ks.pvalue:.3f}")
