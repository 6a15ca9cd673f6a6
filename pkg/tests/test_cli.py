import io
import json

import pytest

from lagc.cli import EXIT_FAIL, EXIT_GATE, EXIT_OK, EXIT_PARSE, EXIT_TRUNCATED, EXIT_USAGE, main

RACING_BRANCHES = "co x:=1; y:=x+1 || x:=2 oc"


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def src(tmp_path):
    def write(text, name="prog.lagc"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def test_run_text(src):
    code, out = run("run", src("x:=1; y:=x+1"), "--model", "seq")
    assert code == EXIT_OK
    assert out.splitlines() == [
        "# trace 1 (completed)",
        "  [x↦0, y↦0]",
        "  [x↦1, y↦0]",
        "  [x↦1, y↦2]",
        "  final: x=1 y=2",
        "summary: completed=1 deadlocked=0 truncated=0 policy=base",
    ]


def test_run_machine_is_json_lines(src):
    code, out = run("run", src(RACING_BRANCHES), "--format", "machine")
    assert code == EXIT_OK
    recs = [json.loads(line) for line in out.splitlines()]
    assert recs[-1]["summary"]["completed"] == 3


def test_parallel_output_identical(src):
    f = src(RACING_BRANCHES)
    for fmt in ("text", "machine"):
        a = run("run", f, "--format", fmt)
        b = run("run", f, "--format", fmt, "--parallel", "3")
        assert a == b


def test_trace_cap_from_env(src, monkeypatch):
    f = src("co input(x) || input(y) oc")
    monkeypatch.setenv("LAGC_MAX_TRACES", "4")
    code, out = run("run", f)
    assert out.count("# trace") == 4 and "(trace cap reached)" in out
    code, out = run("run", f, "--max-traces", "2")
    assert out.count("# trace") == 2


def test_domain_flag(src):
    code, out = run("run", src("input(x)"), "--domain", "0..1")
    assert code == EXIT_OK and "completed=2" in out


def test_all_runs_truncated(src):
    code, out = run("run", src("while tt { x := x + 1 }"), "--model", "seq", "--max-steps", "20")
    assert code == EXIT_TRUNCATED and "step bound" in out


def test_error_codes(src):
    assert run("run", src("x := "), "--model", "seq")[0] == EXIT_PARSE
    assert run("run", src("co x:=1 || x:=2 oc"), "--model", "seq")[0] == EXIT_GATE
    assert run("run", src("skip"), "--wf", "bogus")[0] == EXIT_USAGE
    assert run("run", src("skip"), "--wf", "actor")[0] == EXIT_USAGE
    assert run("run", "/nonexistent/file")[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["run", "x", "--domain", "3..1"], io.StringIO())
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit):
        main(["run", "x", "--pool-size", "zz=3"], io.StringIO())


MSG = "m(x) { send(x + 1, @p0); send(x, @p0) } { p := spawn(m, 5); receive(a, p); receive(b, p) }"


def test_run_then_check_wf(src, tmp_path):
    code, out = run("run", src(MSG), "--model", "multi", "--wf", "ac,fifo", "--format", "machine")
    assert code == EXIT_OK
    traces = tmp_path / "t.jsonl"
    traces.write_text("\n".join(line for line in out.splitlines() if "summary" not in line) + "\n")
    code, out = run("check-wf", str(traces), "--model", "multi", "--wf", "fifo")
    assert code == EXIT_OK
    assert out.splitlines() and all(": pass" in line for line in out.splitlines())


def test_check_wf_reports_violation(src, tmp_path):
    code, out = run("run", src(MSG), "--model", "multi", "--wf", "ac", "--format", "machine")
    lines = out.splitlines()[:-1]
    traces = tmp_path / "t.jsonl"
    traces.write_text("\n".join(lines) + "\n")
    # ac admits overtaking; fifo must reject at least one of those traces
    code, out = run("check-wf", str(traces), "--model", "multi", "--wf", "fifo")
    assert code == EXIT_FAIL and "fail at event" in out
    code, out = run("check-wf", str(traces), "--model", "multi", "--wf", "fifo", "--format", "machine")
    recs = [json.loads(x) for x in out.splitlines()]
    assert any(not r["wf"] and "index" in r for r in recs)


def test_check_wf_empty_and_malformed(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert run("check-wf", str(empty))[0] == EXIT_OK
    bad = tmp_path / "b.jsonl"
    bad.write_text("{not json\n")
    assert run("check-wf", str(bad))[0] == EXIT_PARSE


def test_prove(src, tmp_path):
    f = src("x:=1; y:=x+1")
    (tmp_path / "prog.lagc.contract").write_text("pre: tt\npost: y == 2\n")
    code, out = run("prove", f, "--model", "seq")
    assert code == EXIT_OK and "proved on domain -3..3" in out
    bad = tmp_path / "bad.contract"
    bad.write_text("post: y == 3\n")
    code, out = run("prove", f, "--model", "seq", "--contract", str(bad))
    assert code == EXIT_FAIL and "counter-valuation" in out
    code, out = run("prove", f, "--model", "seq", "--contract", str(bad), "--format", "machine")
    assert json.loads(out)["proved"] is False


def test_prove_bad_contract(src, tmp_path):
    f = src("skip")
    c = tmp_path / "c"
    c.write_text("pre: tt\n")
    assert run("prove", f, "--contract", str(c))[0] == EXIT_PARSE
