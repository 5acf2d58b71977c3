use pyo3::prelude::*;
use pyo3::types::PyModule;

use pdabench_py::{matrix, parse_scorer, rows};

#[test]
fn matrix_round_trip() {
    let m = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
    let t = matrix(&m).unwrap();
    assert_eq!(t.shape(), &[3, 2]);
    assert_eq!(rows(&t), m);
}

#[test]
fn ragged_matrix_is_an_error() {
    assert!(matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn scorer_names_parse() {
    assert!(parse_scorer("ORACLE").is_ok());
    assert!(parse_scorer("100-RND").is_ok());
    assert!(parse_scorer("best").is_err());
}

#[test]
fn module_works_from_python() {
    Python::attach(|py| {
        let m = PyModule::new(py, "pdabench_py").unwrap();
        pdabench_py::register(&m).unwrap();
        let locals = pyo3::types::PyDict::new(py);
        locals.set_item("pb", &m).unwrap();
        py.run(
            c"
import math
plan, rows, cols, ok = pb.balanced_sinkhorn([[0.0, 1.0], [1.0, 0.0]], eps=0.1)
assert ok and abs(sum(rows) - 1.0) < 1e-9
assert abs(pb.entropy_score([[0.0, 0.0, 0.0]]) - math.log(3)) < 1e-12
cfg = pb.MethodConfig('safn', {'lambda': 0.05, 'delta_r': 1.0})
assert cfg.tag == 'safn' and cfg.hp_key() == 'safn[delta_r=1,lambda=0.05]'
try:
    pb.MethodConfig('nope')
    raise AssertionError('unknown method accepted')
except ValueError:
    pass
",
            None,
            Some(&locals),
        )
        .unwrap();
    });
}
