import dataclasses
import json

import numpy as np
import pytest

from ebnf.cli import build_parser, main, resolve_config
from ebnf.core import SCHEMA_LINE, Dataset, EngineConfig, write_dataset
from ebnf.simulate import ScenarioSpec, draw_scenario

FLAG_CASES = [
    ("rho", "--rho", "rho", "0.01", "0.02", 0.02),
    ("grid_size", "--grid-size", "grid_size_S", "50", "60", 60),
    ("cw", "--cw", "grid_halfwidth_cw", "4.0", "3.0", 3.0),
    ("mgf_points", "--mgf-points", "mgf_points", "[-0.2, 0.2]", "-0.1,0.1", (-0.1, 0.1)),
    ("alpha", "--alpha", "alpha", "0.2", "0.1", 0.1),
    ("delta", "--delta", "delta", "0.5", "1.5", 1.5),
    ("seed", "--seed", "seed", "3", "4", 4),
]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    s = draw_scenario(ScenarioSpec("S1", 4.0, 60, 10, seed=5))
    write_dataset(root / "d.csv", s.dataset)
    assert main(["fit", str(root / "d.csv"), "-o", str(root / "m.json")]) == 0
    return root


def _run(args, out):
    code = main(args + ["-o", str(out)])
    return code, out.read_bytes() if out.exists() else b""


def _resolve(argv):
    return resolve_config(build_parser().parse_args(argv))[0]


@pytest.mark.parametrize("case", FLAG_CASES, ids=[c[0] for c in FLAG_CASES])
def test_flag_beats_file_beats_default(tmp_path, case, files):
    _, flag, field, file_value, flag_value, expected = case
    cfg_file = tmp_path / "c.toml"
    cfg_file.write_text(f"{field} = {file_value}\n")
    base = ["fit", str(files / "d.csv")]
    assert getattr(_resolve(base), field) == getattr(EngineConfig(), field)
    from_file = getattr(_resolve(base + ["--config", str(cfg_file)]), field)
    assert from_file == EngineConfig.from_mapping({field: json.loads(file_value)}).__getattribute__(field)
    assert from_file != getattr(EngineConfig(), field)
    assert getattr(_resolve(base + ["--config", str(cfg_file), f"{flag}={flag_value}"]), field) == expected


@pytest.mark.parametrize("field", [f.name for f in dataclasses.fields(EngineConfig)])
def test_set_override_every_field(tmp_path, files, field):
    cfg = EngineConfig()
    value = getattr(cfg, field)
    if isinstance(value, bool):
        new, text = (not value), str(not value).lower()
    elif isinstance(value, int):
        new = value + 1
        text = str(new)
    elif isinstance(value, float):
        new = value / 2 if value else 0.25
        text = repr(new)
    else:
        new = (-0.25, 0.25)
        text = "-0.25,0.25"
    cfg_file = tmp_path / "c.toml"
    cfg_file.write_text(f"{field} = {json.dumps(value) if not isinstance(value, tuple) else list(value)}\n")
    got = _resolve(["fit", str(files / "d.csv"), "--config", str(cfg_file), "--set", f"{field}={text}"])
    assert getattr(got, field) == new


def test_every_verb_is_thread_invariant_and_repeatable(files, tmp_path):
    d, m = str(files / "d.csv"), str(files / "m.json")
    raw = tmp_path / "raw.csv"
    raw.write_text("unit_id,successes,trials\n" + "".join(f"u{i % 7},{i % 4},{5 + i % 3}\n" for i in range(40)))
    verbs = [
        ["ingest", str(raw)],
        ["fit", d],
        ["estimate", "--model", m, "--data", d],
        ["interval", "--model", m, "--data", d],
        ["test", "--model", m, "--data", d, "--delta", "1", "--alpha", "0.1"],
        ["simulate", "--n", "60", "--reps", "2", "--study", "all", "--seed", "7"],
    ]
    for v in verbs:
        outs = []
        for threads in ("1", "8", "1"):
            code, text = _run(v + ["--threads", threads], tmp_path / f"{v[0]}_{threads}.out")
            assert code == 0, v
            outs.append(text)
        assert outs[0] == outs[1] == outs[2], v[0]


def test_output_schemas(files, tmp_path):
    d, m = str(files / "d.csv"), str(files / "m.json")
    heads = {
        "estimate": "id,x,s2,k,theta_hat,floored",
        "interval": "id,theta_hat,lo,hi,alpha,flags",
        "test": "id,pn,p_value,rejected_nf,rejected_bh",
    }
    for verb, head in heads.items():
        _, text = _run([verb, "--model", m, "--data", d], tmp_path / f"{verb}.csv")
        lines = text.decode().splitlines()
        assert lines[0] == SCHEMA_LINE and lines[1] == head and len(lines) == 62
    out = tmp_path / "sim.csv"
    js = tmp_path / "sim.json"
    plot = tmp_path / "plot.csv"
    code = main(
        ["simulate", "--n", "60", "--reps", "1", "--json", str(js), "--emit-plot-data", str(plot), "--etas", "0,4", "-o", str(out)]
    )
    assert code == 0
    assert out.read_text().splitlines()[1] == "scenario,eta,n,k,method,metric,value"
    assert json.loads(js.read_text())["studies"]["estimation"]["ML"]["reps"] == 1
    assert len(plot.read_text().splitlines()) == 2 + 4


def test_simulate_example_is_byte_identical(capsys):
    argv = ["simulate", "--scenario", "S1", "--eta", "4", "--n", "500", "--k", "10", "--reps", "2", "--seed", "7"]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first
    assert first.startswith(SCHEMA_LINE)


def test_k_two_rows_exit_one_and_named(files, tmp_path, capsys):
    s = draw_scenario(ScenarioSpec("S1", 4.0, 30, 10, seed=2)).dataset
    k = np.where(np.isin(np.arange(30), [4, 17]), 2.0, 10.0)
    write_dataset(tmp_path / "k2.csv", Dataset.from_arrays(s.x, s.s2, k, ids=[f"r{i}" for i in range(30)]))
    code = main(["estimate", "--model", str(files / "m.json"), "--data", str(tmp_path / "k2.csv")])
    err = capsys.readouterr().err
    assert code == 1
    assert err.startswith("EBNF-E103:") and "r4" in err and "r17" in err


def test_numerical_failure_exits_two(tmp_path, capsys):
    rng = np.random.default_rng(0)
    k = rng.integers(5, 12, 80).astype(float)
    write_dataset(tmp_path / "mixed.csv", Dataset.from_arrays(rng.normal(0, 1, 80), rng.gamma(3, 0.5, 80), k))
    assert main(["fit", str(tmp_path / "mixed.csv"), "-o", str(tmp_path / "c.json")]) == 0
    write_dataset(tmp_path / "far.csv", Dataset.from_arrays([0.0], [1.0], [500.0], ids=["far"]))
    code = main(["estimate", "--model", str(tmp_path / "c.json"), "--data", str(tmp_path / "far.csv")])
    assert code == 2
    assert capsys.readouterr().err.startswith("EBNF-E202:")


@pytest.mark.parametrize(
    "argv, prefix",
    [
        (["bogus"], "EBNF-E105:"),
        ([], "EBNF-E105:"),
        (["fit", "missing.csv"], "EBNF-E105:"),
        (["fit", "x.csv", "--set", "nope=1"], "EBNF-E104:"),
        (["fit", "x.csv", "--set", "novalue"], "EBNF-E104:"),
        (["fit", "x.csv", "--rho", "-1"], "EBNF-E104:"),
        (["simulate", "--reps", "0"], "EBNF-E105:"),
    ],
)
def test_errors_are_prefixed(argv, prefix, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith(prefix)


def test_bad_input_file(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("id,x,s2,k\na,1,0,10\n")
    assert main(["fit", str(p)]) == 1
    assert capsys.readouterr().err.startswith("EBNF-E101:")
