import json
import math
import subprocess
import sys

import pytest

from qpresponse import cli
from qpresponse.errors import ConfigError

RESONANT = """
[problem]
l = 3
omega = [1, 1]
epsilon = 1e-3
f = [{ degree = 0, k = [0, 0], re = 1.0 }]

[numerics]
K = 8
"""

EVEN_WRONG_SIGN = """
[problem]
l = 2
omega = ["1"]
epsilon = 1e-2
f = [{ degree = 0, k = [0], re = 1.0 }]
"""

GOLDEN = """
[problem]
l = 3
omega = ["1", "(sqrt(5) - 1)/2"]
epsilon = 1e-3
f = [{ degree = 0, k = [0, 0], re = 1.0 }]

[numerics]
K = 16
"""

ZERO_AVERAGE_L2 = """
[problem]
l = 2
omega = [1.0]
epsilon = 1e-2
mode = "zero_average"
f = [
    { degree = 0, k = [1], re = 0.5 },
    { degree = 0, k = [-1], re = 0.5 },
    { degree = 1, k = [0], re = 1.0 },
]
"""

COUPLED = """
[problem]
l = 3
n = 2
omega = [1.0]
epsilon = 1e-3
a0_guess = [-1.0, -1.0]
f = [
    { degree = 0, k = [0], re = [1.0, 1.0] },
    { degree = 0, k = [1], re = [0.05, 0.02] },
    { degree = 0, k = [-1], re = [0.05, 0.02] },
]
phi = [
    { component = 0, exponents = [3, 0], coef = 1.0 },
    { component = 0, exponents = [1, 2], coef = 0.3 },
    { component = 1, exponents = [0, 3], coef = 1.0 },
    { component = 1, exponents = [2, 1], coef = 0.3 },
]

[numerics]
K = 16
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(*args):
    return cli.main([*args, "--quiet"])


def test_bundled_config_solves_to_known_leading_term(tmp_path):
    out = tmp_path / "o"
    assert run("solve", "--config", str(cli.bundled_config()), "--out", str(out)) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "converged"
    assert rep["solution"]["a"] == {"re": -0.1, "im": 0.0}
    assert rep["solution"]["residual"]["sup"] <= 1e-9
    assert (out / "coefficients.csv").read_text().startswith("# d=1 n=1 K=32")


def test_resonant_frequency_is_a_config_error(tmp_path, capsys):
    code = cli.main(["solve", "--config", write(tmp_path, RESONANT), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "k=(1, -1)" in capsys.readouterr().err


def test_missing_real_branch_is_a_math_failure(tmp_path, capsys):
    code = cli.main(["solve", "--config", write(tmp_path, EVEN_WRONG_SIGN), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "NoRealBranch" in capsys.readouterr().err
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"] == "failed" and rep["error"] == "NoRealBranch"


def test_zero_average_and_coupled_configs_solve(tmp_path):
    for name, text in (("za", ZERO_AVERAGE_L2), ("nd", COUPLED)):
        out = tmp_path / name
        assert run("solve", "--config", write(tmp_path, text, f"{name}.toml"), "--out", str(out)) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["solution"]["residual"]["sup"] <= 1e-8


def test_sweep_writes_fit_and_rows(tmp_path):
    out = tmp_path / "s"
    cfg = str(cli.bundled_config())
    assert run("sweep", "--config", cfg, "--out", str(out), "--epsilons", "1e-2,1e-3,1e-4") == 0
    rows = (out / "scaling.csv").read_text().splitlines()
    assert rows[0] == "epsilon,abs_a,op_norm,norm_V,residual" and len(rows) == 4
    fit = {line.split(",")[0]: float(line.split(",")[1]) for line in (out / "scaling_fit.csv").read_text().splitlines()[1:]}
    assert abs(fit["abs_a"] - 1 / 3) <= 1e-10
    assert len(list(out.glob("report_eps*.json"))) == 3
    assert run("sweep", "--config", cfg, "--out", str(out), "--epsilons", "1e-2") == 1


def test_sweep_partial_failure_exits_2(tmp_path):
    text = EVEN_WRONG_SIGN.replace("epsilon = 1e-2", "epsilon = -1e-2")
    out = tmp_path / "s"
    assert run("sweep", "--config", write(tmp_path, text), "--out", str(out), "--epsilons=-1e-2,-1e-3,1e-4") == 2
    assert (out / "scaling.csv").read_text().startswith("# incomplete")


def test_monodromy_command(tmp_path):
    cfg = str(cli.bundled_config())
    out = tmp_path / "m"
    assert run("monodromy", "--config", cfg, "--out", str(out), "--loops", "1", "--steps", "128") == 0
    summary = json.loads((out / "monodromy.json").read_text())
    got = complex(summary["ratio"]["re"], summary["ratio"]["im"])
    assert abs(got - complex(math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3))) <= 1e-8
    lines = (out / "monodromy.csv").read_text().splitlines()
    assert lines[0].startswith("t,re_eps,im_eps,re_a,im_a,in_good_region")
    assert any(",untrusted," in line for line in lines)
    assert run("monodromy", "--config", cfg, "--out", str(out), "--loops", "3") == 0
    summary = json.loads((out / "monodromy.json").read_text())
    assert abs(complex(summary["ratio"]["re"], summary["ratio"]["im"]) - 1) <= 1e-8
    assert run("monodromy", "--config", cfg, "--out", str(out), "--steps", "8") == 1


def test_check_frequency_command(tmp_path):
    out = tmp_path / "f"
    assert run("check-frequency", "--config", write(tmp_path, GOLDEN), "--out", str(out), "--taus", "1") == 0
    lines = [line.split(",") for line in (out / "diophantine.csv").read_text().splitlines() if not line.startswith("#")]
    rows = lines[1:]
    eta_gammas = [float(r[2]) for r in rows if r[0] == "eta"]
    assert eta_gammas == sorted(eta_gammas)
    assert all(float(r[2]) > 0 for r in rows if r[0] == "tau")
    assert run("check-frequency", "--config", write(tmp_path, RESONANT, "res.toml"), "--out", str(out)) == 2


def test_verify_reruns_residual_and_shadow(tmp_path):
    out = tmp_path / "v"
    text = cli.bundled_config().read_text().replace("shadow = false", "shadow = true").replace("t_span = 50.0", "t_span = 5.0")
    cfg = write(tmp_path, text)
    assert run("solve", "--config", cfg, "--out", str(out)) == 0
    assert run("verify", "--config", cfg, "--report", str(out)) == 0
    res = json.loads((out / "verify.json").read_text())
    assert res["residual"]["sup"] <= 1e-9
    assert res["shadow"]["direction"] == "backward" and res["shadow"]["max_error"] <= 1e-9
    assert run("verify", "--config", cfg, "--report", str(tmp_path / "nothing")) == 1


@pytest.mark.parametrize(
    "expr,value",
    [(1, 1.0), ("2/3", 2 / 3), ("sqrt(2)", math.sqrt(2)), ("golden", (1 + math.sqrt(5)) / 2), ("-(1 + sqrt(5))/2", -(1 + math.sqrt(5)) / 2)],
)
def test_frequency_expressions(expr, value):
    assert cli.eval_frequency(expr) == value


@pytest.mark.parametrize("expr", ["__import__('os')", "sqrt(2.0)", "2**3", "pi", "1/0", "sqrt(-1)", True])
def test_frequency_expressions_reject_everything_else(expr):
    with pytest.raises(ConfigError):
        cli.eval_frequency(expr)


@pytest.mark.parametrize(
    "patch,fragment",
    [
        (("K = 32", "K = 300"), "numerics.K"),
        (("l = 3", "l = 3\nbogus = 1"), "unknown field"),
        (('omega = ["1"]', 'omega = ["1", "1", "1", "1", "1"]'), "problem.omega"),
        (("epsilon = 1e-3", "epsilon = 'x'"), "problem.epsilon"),
        (("m = 2.0", "m = 0.5"), "numerics.rho/m"),
        (("{ degree = 0, k = [1], re = 0.05 }", "{ degree = 0, k = [1, 2], re = 0.05 }"), "problem.f[1].k"),
        (("[numerics]", "[numerics"), "line"),
    ],
)
def test_config_errors_name_the_field(patch, fragment):
    text = cli.bundled_config().read_text().replace(*patch)
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(text, "cfg.toml")
    assert fragment in str(exc.value)


def test_argument_errors_exit_1(tmp_path):
    assert cli.main(["solve"]) == 1
    assert cli.main(["solve", "--config", str(tmp_path / "missing.toml"), "--quiet"]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qpresponse", "check-frequency", "--config", str(cli.bundled_config()), "--out", str(tmp_path), "--quiet"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "diophantine.csv").exists()
