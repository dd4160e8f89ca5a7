use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "sdm").unwrap();
        sdm::sdm(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("sdm", m).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn parse_apply_replay() {
    run(c"
mesh = sdm.Mesh.synthetic(3, ['rect_pocket'])
faces = dict(mesh.labels())['rect_pocket']
cmd = sdm.parse_command('rotate the pocket 90 degrees and then move it up 2 mm')['structured']
assert len(cmd['commands']) == 2
edited, calls = mesh.apply(cmd, faces)
assert [c['function'] for c in calls] == ['rotate_faces', 'translate_faces']
assert mesh.replay(calls).to_json() == edited.to_json()
assert sdm.Mesh.from_json(edited.to_json()).to_json() == edited.to_json()
");
}

#[test]
fn errors_become_exceptions() {
    run(c"
mesh = sdm.Mesh.synthetic(3, [])
for bad in (lambda: mesh.apply({'commands': []}, [1]),
            lambda: sdm.Mesh.from_json('{'),
            lambda: sdm.Model(preset='huge'),
            lambda: sdm.Model().generate(mesh, 0, 'slot')):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError('no error raised')
");
}
