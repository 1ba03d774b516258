import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnlab import cli, harness, pic
from qnlab.errors import ConfigurationError, DataError, ParameterError
from qnlab.harness import RunConfig

SMALL = RunConfig(n=32, ppc=16, t_end=0.1)


# --- configuration -----------------------------------------------------------------------------


def test_defaults_are_valid():
    assert RunConfig().validate() == RunConfig()


@pytest.mark.parametrize("change", [
    {"n": 48}, {"ppc": 2}, {"ppc": 20}, {"eps": 1e-5}, {"k0": 4.0}, {"omega0": "vortex_sheet"},
    {"t_end": 0.0}, {"dt_factor": 0.3}, {"dt_refine": 0}, {"jitter": 1.5}, {"kmax": 40}, {"checkpoint_every": -1},
])
def test_config_rejects(change):
    with pytest.raises(ConfigurationError):
        RunConfig().replace(**change)


def test_parse_config_text():
    cfg = harness.parse_config("""
        # reference run
        eps = 0.05   # smaller Debye length
        omega0 = smoothed_patch
        omega0.radius = 0.15
        omega0.amplitude = 2
        thermal = false
    """)
    assert cfg.eps == 0.05 and cfg.omega0 == "smoothed_patch" and cfg.thermal is False
    assert cfg.omega0_params == {"radius": 0.15, "amplitude": 2}
    for bad in ("eps 0.1", "colour = blue", "n = sixty", "thermal = maybe", "omega0_params = x"):
        with pytest.raises(ConfigurationError):
            harness.parse_config(bad)


name_chars = st.text("abcdefghijklmnopqrstuvwxyz0123456789_-./", min_size=1, max_size=12)


@settings(max_examples=60, deadline=None)
@given(
    n=st.sampled_from([16, 32, 64, 128]),
    q=st.integers(2, 6),
    eps=st.floats(1e-4, 1.0),
    beta=st.floats(0.1, 3.0),
    k0=st.floats(4.01, 12.0),
    family=st.sampled_from(["shear", "eigenpair", "smoothed_patch", "random_bounded"]),
    params=st.dictionaries(st.sampled_from(["amplitude", "radius", "seed", "mode"]),
                           st.one_of(st.integers(0, 100), st.floats(-10, 10, allow_nan=False))),
    t_end=st.floats(1e-3, 10.0),
    thermal=st.booleans(),
    seed=st.integers(0, 2**63),
    out=name_chars,
    every=st.integers(0, 50),
)
def test_config_round_trip(n, q, eps, beta, k0, family, params, t_end, thermal, seed, out, every):
    cfg = RunConfig(n=n, ppc=q * q, eps=eps, beta=beta, alpha=beta, k0=k0, omega0=family,
                    omega0_params=params, t_end=t_end, thermal=thermal, seed=seed, out=out,
                    checkpoint_every=every, kmax=min(4, n // 3)).validate()
    back = harness.parse_config(harness.format_config(cfg))
    assert back == cfg
    for key, val in cfg.omega0_params.items():
        assert type(back.omega0_params[key]) is type(val)


def test_save_load(tmp_path):
    cfg = RunConfig(eps=0.025, omega0_params={"amplitude": 0.5})
    harness.save_config(cfg, tmp_path / "a.cfg")
    assert harness.load_config(tmp_path / "a.cfg") == cfg


# --- time step rule -------------------------------------------------------------------------------


def test_time_step_rule():
    dt, steps = harness.time_step(RunConfig(), 1 / (2 * math.pi))
    base = min(0.2 * math.sqrt(0.1), (1 / 64) / (2 / (2 * math.pi) + 1))
    assert dt <= base and dt * steps == pytest.approx(0.5, rel=1e-14)
    assert steps == math.ceil(0.5 / base)
    dt2, steps2 = harness.time_step(RunConfig(dt_refine=2), 1 / (2 * math.pi))
    assert steps2 == 2 * steps and dt2 == pytest.approx(dt / 2, rel=1e-14)
    # plasma rule binds for small eps on a coarse grid
    dt3, _ = harness.time_step(RunConfig(n=8, eps=1e-4, kmax=2), 0.0)
    assert dt3 <= 0.2 * math.sqrt(1e-4)


# --- rate fitting ------------------------------------------------------------------------------------


def test_fit_rate_examples():
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    assert harness.fit_rate({"eps": eps, "v": eps}, "v") == pytest.approx(1.0, abs=1e-12)
    assert harness.fit_rate({"eps": eps, "v": 3 * eps**0.7}, "v") == pytest.approx(0.7, abs=1e-12)
    with pytest.raises(DataError):
        harness.fit_rate({"eps": eps[:2], "v": eps[:2]}, "v")
    with pytest.raises(DataError):
        harness.fit_rate({"eps": eps, "v": eps - 0.05}, "v")


def test_eps_list_validation():
    assert harness.check_eps_list([0.1, 0.05]) == [0.1, 0.05]
    for bad in ([], [0.1, 0.1], [0.05, 0.1], [0.1, 5e-5]):
        with pytest.raises(ConfigurationError):
            harness.check_eps_list(bad)


def test_monotone_horizon():
    t = np.array([0.0, 0.1, 0.2, 0.3])
    rows = [(t, np.array([1.0, 2.0, 3.0, 3.0])), (t, np.array([0.5, 1.0, 3.5, 1.0]))]
    assert harness.monotone_horizon(rows) == pytest.approx(0.1)
    assert math.isnan(harness.monotone_horizon([(t, np.ones(4)), (t, np.ones(4))]))


# --- runs -------------------------------------------------------------------------------------------


def test_zero_perturbation_run():
    cfg = SMALL.replace(thermal=False, jitter=0.0, omega0_params={"amplitude": 0.0})
    rep = harness.run_single(cfg, write=False)
    assert np.max(rep.steps["E_total"]) <= 1e-10
    assert np.max(rep.steps["Hm1_rho"]) <= 1e-10 and np.max(rep.steps["Qstar"]) <= 1e-12


def test_single_row_sweep_matches_run():
    cfg = SMALL.replace(eps=0.05)
    table = harness.sweep_epsilon(cfg, [0.05], write=False)
    rep = harness.run_single(cfg, write=False)
    assert len(table.rows) == 1 and table.complete
    row = dict(zip(harness.TABLE_COLUMNS, table.rows[0]))
    assert row["sup_E"] == np.max(rep.steps["E_total"])
    assert row["sup_Hm1_J"] == np.max(rep.steps["Hm1_J"])
    two = harness.sweep_epsilon(SMALL, [0.1, 0.05], write=False)
    assert two.rows[1][:-1] == table.rows[0][:-1]  # rows are independent (runtime aside)


def test_sweep_flags_failed_rows(monkeypatch):
    real = harness.run_single

    def flaky(cfg, *args, **kwargs):
        if cfg.eps == 0.05:
            raise DataError("synthetic failure")
        return real(cfg, *args, **kwargs)

    monkeypatch.setattr(harness, "run_single", flaky)
    table = harness.sweep_epsilon(SMALL, [0.1, 0.05], write=False)
    assert not table.complete and list(table.errors) == [0.05] and len(table.rows) == 1


# --- CLI --------------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def reference_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "reference.cfg"
    harness.save_config(RunConfig(), path)
    return path


@pytest.fixture(scope="module")
def reference_run(reference_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "ref"
    code = cli.main(["run", str(reference_cfg), "--out", str(out), "--checkpoint-every", "20"])
    return code, out


def test_cli_run_outputs(reference_run):
    code, out = reference_run
    assert code == 0
    for name in ("config.cfg", "steps.csv", "audit_series.csv", "euler.csv", "summary.json"):
        assert (out / name).exists()
    header = (out / "steps.csv").read_text().splitlines()[0].split(",")
    assert tuple(header) == harness.STEP_COLUMNS
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"]
    for rep in summary["audits"].values():
        assert set(rep) == {"lhs", "rhs", "constant", "pass"}
    ckpts = sorted((out / "checkpoints").glob("*.qnp"))
    assert [p.name for p in ckpts] == ["ensemble_000020.qnp", "ensemble_000040.qnp"]
    assert len(pic.read_ensemble(ckpts[0])) == 64 * 64 * 16


def test_cli_byte_identical_across_workers(reference_cfg, reference_run, tmp_path):
    _, out = reference_run
    assert cli.main(["run", str(reference_cfg), "--out", str(tmp_path), "--workers", "3"]) == 0
    for name in ("steps.csv", "audit_series.csv", "euler.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_cli_report(reference_run, capsys):
    _, out = reference_run
    assert cli.main(["report", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_verify(tmp_path, capsys):
    cfg = tmp_path / "v.cfg"
    harness.save_config(RunConfig(n=32), cfg)
    assert cli.main(["verify", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["all_pass"] is True
    harness.save_config(RunConfig(n=32, alpha=0.5), cfg)
    assert cli.main(["verify", str(cfg)]) == 3


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("k0 = 3\n")
    assert cli.main(["run", str(bad)]) == 2
    bad.write_text("wavelength = 3\n")
    assert cli.main(["verify", str(bad)]) == 2
    good = tmp_path / "good.cfg"
    harness.save_config(SMALL, good)
    assert cli.main(["sweep", str(good), "--eps", "0.05,0.1", "--out", str(tmp_path / "s")]) == 2
    assert cli.main(["run", str(good), "--workers", "0"]) == 2
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 4
    assert cli.main(["report", str(tmp_path / "nowhere")]) == 4
    with pytest.raises(SystemExit) as exc:
        cli.main(["launch", str(good)])
    assert exc.value.code == 2


def test_cli_out_precedence(tmp_path, monkeypatch):
    cfg_path = tmp_path / "c.cfg"
    harness.save_config(SMALL.replace(out=str(tmp_path / "from_cfg"), t_end=0.02), cfg_path)
    monkeypatch.delenv("QNLAB_OUT", raising=False)
    cli.main(["run", str(cfg_path)])
    assert (tmp_path / "from_cfg" / "steps.csv").exists()
    monkeypatch.setenv("QNLAB_OUT", str(tmp_path / "from_env"))
    cli.main(["run", str(cfg_path)])
    assert (tmp_path / "from_env" / "steps.csv").exists()
    cli.main(["run", str(cfg_path), "--out", str(tmp_path / "from_flag")])
    assert (tmp_path / "from_flag" / "steps.csv").exists()


def test_cli_overrides(tmp_path):
    cfg_path = tmp_path / "c.cfg"
    harness.save_config(SMALL, cfg_path)
    cli.main(["run", str(cfg_path), "--out", str(tmp_path / "o"), "--seed", "7", "--t-end", "0.02"])
    saved = harness.load_config(tmp_path / "o" / "config.cfg")
    assert saved.seed == 7 and saved.t_end == 0.02
    steps = harness.read_csv(tmp_path / "o" / "steps.csv")
    assert steps["t"][-1] == pytest.approx(0.02)


def test_cli_sweep(tmp_path, capsys):
    cfg_path = tmp_path / "c.cfg"
    harness.save_config(SMALL.replace(t_end=0.05), cfg_path)
    code = cli.main(["sweep", str(cfg_path), "--eps", "0.1", "0.05", "0.025", "--out", str(tmp_path / "s")])
    assert code == 0
    tab = harness.read_csv(tmp_path / "s" / "convergence.csv")
    assert list(tab["eps"]) == [0.1, 0.05, 0.025]
    assert (tmp_path / "s" / "eps_0.05" / "steps.csv").exists()
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "s")]) == 0
    assert "rate sup_E" in capsys.readouterr().out
