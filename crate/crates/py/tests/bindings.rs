use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) -> PyResult<()> {
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("sg", pyo3::wrap_pymodule!(switchgrid_py::py_module)(py))?;
        py.run(&std::ffi::CString::new(code).unwrap(), Some(&globals), None)
    })
}

#[test]
fn counterexample_matches_closed_form() {
    run(r#"
model = sg.Model.counterexample()
grid = sg.Grid(model, [(-1.0, 1.0), (-0.5, 2.0)], [11, 51])
field = sg.solve(model, grid, 16)
node = grid.nearest_node([0.0, 0.2])
exact = sg.counterexample_value(0.0, grid.coordinates(node), 0)
assert abs(field.get(0, node, 0) - exact) < 1e-12, (field.get(0, node, 0), exact)
assert field.penalty == 16 and field.regimes == 2
"#)
    .unwrap();
}

#[test]
fn policy_and_payoff() {
    run(r#"
model = sg.Model.counterexample()
grid = sg.Grid(model, [(-1.0, 1.0), (-0.5, 2.5)], [5, 181])
policy = sg.extract_policy(sg.solve(model, grid, 64), model)
assert policy.switch_count > 0
est = sg.estimate_payoff(model, policy, 0.0, [0.0, 2.0], 0, paths=2, seed=7)
assert abs(est["mean"] - 1.0) < 1e-12 and est["std_error"] == 0.0, est
"#)
    .unwrap();
}

#[test]
fn reports_are_dicts() {
    run(r#"
model = sg.Model.pumped_storage()
grid = sg.Grid(model, [(-0.5, 1.5), (0.0, 20.0)], [11, 21])
table = sg.converge(model, grid, [1, 2, 4])
assert table["monotone"] and [r["n"] for r in table["rungs"]] == [1, 2, 4]
report = sg.verify(model, grid, 4, ladder=[1, 4], samples=20)
assert report["passed"], report
assert all(r["status"] == "skipped" for r in report["rows"] if r["name"].startswith("oracle"))
"#)
    .unwrap();
}

#[test]
fn errors_raise_switchgrid_error() {
    run(r#"
model = sg.Model.counterexample()
for bad in (lambda: sg.Model.counterexample(cost=0.0),
            lambda: sg.Model.from_json("{}"),
            lambda: sg.solve(model, sg.Grid(model, [(-1.0, 1.0), (-0.5, 2.0)], [5, 51]), 0),
            lambda: sg.solve(model, sg.Grid(model, [(-1.0, 1.0), (-0.5, 2.0)], [5, 51], time_steps=5), 4),
            lambda: sg.counterexample_value(0.0, [0.0], 0)):
    try:
        bad()
    except sg.SwitchgridError:
        pass
    else:
        raise AssertionError(bad)
"#)
    .unwrap();
}
