use std::ffi::CString;

use perceptloco_py::perceptloco_py;
use pyo3::prelude::*;
use pyo3::types::PyDict;

/// Runs the Python smoke script against the statically linked module.
#[test]
fn python_smoke_script_passes() {
    pyo3::append_to_inittab!(perceptloco_py);
    Python::initialize();
    let script = CString::new(include_str!("../../../python/smoke_test.py")).unwrap();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("__name__", "smoke_test").unwrap();
        let run = py.run(&script, Some(&globals), None).and_then(|()| {
            py.run(
                c"import contextlib, io\nbuf = io.StringIO()\nwith contextlib.redirect_stdout(buf):\n    main()\nlog = buf.getvalue()\n",
                Some(&globals),
                None,
            )
        });
        if let Err(e) = run {
            e.display(py);
            panic!("smoke script failed: {e}");
        }
        let log: String = globals.get_item("log").unwrap().unwrap().extract().unwrap();
        print!("{log}");
        assert!(log.contains("all smoke checks passed"), "{log}");
        assert!(!log.contains("FAIL"));
    });
}
