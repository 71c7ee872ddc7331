use pyo3::ffi::c_str;
use pyo3::prelude::*;

use pyhypee::pyhypee;

#[test]
fn module_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(pyhypee);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            c_str!(
                r#"
import math
import pyhypee as h

p = h.exp_map_origin([0.3, -0.4], 1.0)
assert abs(-p[0] ** 2 + p[1] ** 2 + p[2] ** 2 + 1.0) < 1e-9
back = h.log_map_origin(p[1:], 1.0)
assert max(abs(a - b) for a, b in zip(back, [0.3, -0.4])) < 1e-12
assert abs(h.geodesic_distance([0.0, 0.0], p[1:]) - 0.5) < 1e-12

cost = h.CostModel([13.08e3, 19.41e3, 34.9e3])
assert h.percent_truncated(cost.saved_fraction(0)) == 62.5

star = [[0 if i == j else w + v for j, v in enumerate([1, 2, 3, 4])] for i, w in enumerate([1, 2, 3, 4])]
assert h.delta_from_distances(star)["delta_rel"] == 0.0
assert abs(h.curvature_estimate(0.144) - 1.0) < 1e-12

try:
    h.lift([1.0], -1.0)
    raise AssertionError("negative curvature accepted")
except ValueError:
    pass
"#
            ),
            None,
            None,
        )
        .unwrap();
    });
}
