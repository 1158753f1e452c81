"""End-to-end acceptance checks, one test per criterion, driven through the CLI and shipped configs.

Each test prints a single ``criterion N: PASS|FAIL ...`` line to the terminal.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from ekch.harness import cli, reports
from ekch.harness.config import load_config
from ekch.harness.sweeps import make_kernel
from ekch.mollifier import estimate_poincare_constant

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _report(capsys, k: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {k}: {detail}"


def _cli(cmd: str, config: str, out: Path) -> tuple[int, float]:
    t0 = time.perf_counter()
    code = cli.main([cmd, "--config", str(CONFIGS / config), "--out", str(out)])
    return code, time.perf_counter() - t0


def _summary(out: Path) -> dict:
    return reports.read_json(out / "summary.json")["result"]


def _csv_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sweep7(tmp_path_factory):
    out = tmp_path_factory.mktemp("c07")
    code, elapsed = _cli("sweep-eps", "c07_sweep_eps.toml", out)
    return out, code, elapsed, _summary(out)


def test_criterion_01_kernel_certification(tmp_path, capsys):
    c1, t1 = _cli("verify-kernel", "c01_kernel_1d.toml", tmp_path / "1d")
    c2, t2 = _cli("verify-kernel", "c01_kernel_2d.toml", tmp_path / "2d")
    rows = _csv_rows(tmp_path / "1d" / "kernels.csv") + _csv_rows(tmp_path / "2d" / "kernels.csv")
    profiles = {r["profile"] for r in rows}
    worst = max(float(r["m0_err"]) for r in rows), max(float(r["m1"]) for r in rows)
    off = max(float(r["m2_offdiag"]) for r in rows)
    ok = c1 == c2 == 0 and profiles == {"quartic", "bump"} and len(rows) == 12
    ok &= worst[0] <= 1e-14 and worst[1] <= 1e-14 and off <= 1e-12 and t1 + t2 < 5
    _report(capsys, 1, ok, f"|m0-1|={worst[0]:.2e} |m1|={worst[1]:.2e} m2_off={off:.2e} time={t1 + t2:.2f}s")


def test_criterion_02_operator_consistency(tmp_path, capsys):
    code, t = _cli("consistency", "c02_consistency.toml", tmp_path)
    res = _summary(tmp_path)
    slope = res["slopes"]["relative_error"]
    ok = code == 0 and len(res["rows"]) == 4 and abs(slope - 2) <= 0.2 and t < 10
    _report(capsys, 2, ok, f"slope={slope:.4f} time={t:.2f}s")


def test_criterion_03_convolution_oracle(tmp_path, capsys):
    code, t = _cli("verify-kernel", "c03_convolution.toml", tmp_path)
    conv = reports.read_json(tmp_path / "convolution.json")["result"]
    worst = max(c["max_relative_error"] for c in conv)
    ok = code == 0 and all(c["fields"] == 50 for c in conv) and worst <= 1e-12 and t < 10
    _report(capsys, 3, ok, f"max rel err={worst:.2e} time={t:.2f}s")


def test_criterion_04_poincare(tmp_path, capsys):
    code, t = _cli("poincare", "c04_poincare.toml", tmp_path)
    res = _summary(tmp_path)
    # modewise oracle: 2 eta^2 / (1 - w_hat(k)) with w_hat from a direct cosine sum of the weights
    cfg = load_config(CONFIGS / "c04_poincare.toml")
    kern = make_kernel(cfg)
    g = kern.grid
    x = g.offsets[0]
    modes = np.arange(1, g.n // 2 + 1)
    what = np.array([np.sum(kern.weights * np.cos(2 * np.pi * k * x / g.L)) for k in modes])
    ratios = 2 * kern.eta**2 / (1 - what)
    best = int(modes[np.argmax(ratios)])
    est = estimate_poincare_constant(kern)
    ok = code == 0 and res["violations"] == 0 and res["fields"] == 100
    ok &= abs(res["extremal_mode"][0]) == best and res["c_p"] == pytest.approx(ratios.max(), rel=1e-12)
    ok &= est.c_p == res["c_p"] and t < 10
    _report(capsys, 4, ok, f"C_P={res['c_p']:.6f} mode={res['extremal_mode']} oracle mode={best} time={t:.2f}s")


def test_criterion_05_conservation(tmp_path, capsys):
    drifts, total = {}, 0.0
    ok = True
    for system in ["ek", "nlch", "lch"]:
        code, t = _cli(f"run-{system}", f"c05_conservation_{system}.toml", tmp_path / system)
        total += t
        drifts[system] = _summary(tmp_path / system)["mass_drift"]
        ok &= code == 0 and drifts[system] <= 1e-10
    ok &= total < 120
    detail = " ".join(f"{k}={v:.1e}" for k, v in drifts.items())
    _report(capsys, 5, ok, f"mass drift {detail} time={total:.1f}s")


def test_criterion_06_dissipation_budget(tmp_path, capsys):
    res, tols, total = [], [], 0.0
    codes = []
    for level in range(3):
        code, t = _cli("run-ek", f"c06_budget_level{level}.toml", tmp_path / str(level))
        total += t
        codes.append(code)
        bud = _summary(tmp_path / str(level))["audits"]["budget"]
        res.append(bud["value"])
        tols.append(bud["tol"])
    ratios = [res[0] / res[1], res[1] / res[2]]
    tol_ratios = [tols[0] / tols[1], tols[1] / tols[2]]
    ok = codes == [0, 0, 0] and all(r <= tl for r, tl in zip(res, tols))
    ok &= all(1.7 <= r <= 2.3 for r in ratios + tol_ratios) and total < 180
    _report(capsys, 6, ok, f"residuals={[f'{r:.3e}' for r in res]} ratios={[round(r, 3) for r in ratios]} "
                           f"time={total:.1f}s")


def test_criterion_07_epsilon_convergence(sweep7, capsys):
    out, code, elapsed, res = sweep7
    errs = [r["sup_l2_error"] for r in res["rows"]]
    slope = res["slopes"]["sup_l2_error"]
    eps = [r["epsilon"] for r in res["rows"]]
    ok = code == 0 and eps == [0.04, 0.02, 0.01, 0.005] and res["checks"]["error_decreasing"]
    ok &= slope is not None and slope >= 1 and elapsed < 480
    _report(capsys, 7, ok, f"errors={[f'{e:.3e}' for e in errs]} slope={slope:.3f} time={elapsed:.1f}s")


def test_criterion_08_relative_entropy(sweep7, capsys):
    _, _, _, res = sweep7
    min_theta = min(r["min_theta"] for r in res["rows"])
    margin = min(r["min_poincare_margin"] for r in res["rows"])
    slope = res["slopes"]["theta0"]
    ok = res["checks"]["theta_nonnegative"] and min_theta >= -1e-10
    ok &= res["checks"]["poincare_control"] and abs(slope - 2) <= 0.1
    _report(capsys, 8, ok, f"min theta={min_theta:.2e} theta0 slope={slope:.4f} min margin={margin:.2e}")


def test_criterion_09_max_principle(tmp_path, capsys):
    code, t = _cli("run-nlch", "c09_max_principle.toml", tmp_path)
    env = _summary(tmp_path)["audits"]["envelope"]
    ok = code == 0 and env["value"] == 0 and t < 60
    _report(capsys, 9, ok, f"violations={env['value']} time={t:.1f}s")


def test_criterion_10_l1_contraction(tmp_path, capsys):
    code, t = _cli("run-nlch", "c10_contraction.toml", tmp_path)
    aud = _summary(tmp_path)["audits"]
    near, same = aud["contraction"], aud["contraction_identical"]
    ok = code == 0 and near["pass"] and math.isfinite(near["value"]) and near["value"] <= near["tol"]
    ok &= same["pass"] and same["value"] <= 1e-10 and t < 60
    _report(capsys, 10, ok, f"fitted rate={near['value']:.3f} bound={near['tol']:.3e} "
                            f"identical={same['value']:.1e} time={t:.1f}s")


def test_criterion_11_eta_limit(tmp_path, capsys):
    code, t = _cli("sweep-joint", "c11_eta_limit.toml", tmp_path)
    res = _summary(tmp_path)
    dist = [r["nonlocal_vs_local"] for r in res["rows"]]
    etas = [r["eta"] for r in res["rows"]]
    ok = code == 0 and etas == [0.2, 0.1, 0.05] and res["checks"]["nonlocal_vs_local_decreasing"]
    ok &= all(b < a for a, b in zip(dist, dist[1:])) and t < 240
    _report(capsys, 11, ok, f"distances={[f'{d:.3e}' for d in dist]} time={t:.1f}s")


def test_criterion_12_dirac_diagnostics(sweep7, capsys):
    _, _, _, res = sweep7
    w2 = [r["w2_spacetime"] for r in res["rows"]]
    kin = [r["sup_kinetic_l2"] for r in res["rows"]]
    c = res["checks"]
    ok = c["w2_decreasing"] and c["kinetic_decreasing"] and c["concentration_zero"]
    _report(capsys, 12, ok, f"w2={[f'{v:.2e}' for v in w2]} kinetic={[f'{v:.2e}' for v in kin]}")


def test_criterion_13_potential_bounds(tmp_path, capsys):
    total, parts, ok = 0.0, [], True
    for name, expected in [("double_well", 0), ("power", 0), ("invalid_singular", 1)]:
        code, t = _cli("verify-potential", f"c13_potential_{name}.toml", tmp_path / name)
        total += t
        rep = _summary(tmp_path / name)
        ok &= code == expected
        if expected == 0:
            ok &= rep["bounded"] and rep["samples"] == 100000 and rep["eta"] == 0.1
            ok &= rep["c_relative_pressure"] is not None and rep["c_growth"] is not None
            ok &= rep["violations_relative_pressure"] == 0 and rep["violations_growth"] == 0
            parts.append(f"{name}: C1={rep['c_relative_pressure']:.3g} C2={rep['c_growth']:.3g}")
        else:
            ok &= not rep["bounded"] and "unbounded" in rep["reason"]
            parts.append(f"{name}: unbounded")
    ok &= total < 30
    _report(capsys, 13, ok, "; ".join(parts) + f" time={total:.1f}s")


def test_criterion_14_determinism(sweep7, tmp_path, capsys):
    first, _, _, _ = sweep7
    code, _ = _cli("sweep-eps", "c07_sweep_eps.toml", tmp_path)
    names = sorted(p.name for p in first.glob("*.csv"))
    same = [(first / n).read_bytes() == (tmp_path / n).read_bytes() for n in names]
    ok = code == 0 and len(names) == 6 and all(same)
    ok &= (first / "summary.json").read_bytes() == (tmp_path / "summary.json").read_bytes()
    _report(capsys, 14, ok, f"{sum(same)}/{len(names)} CSV files byte-identical")
