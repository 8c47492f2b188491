//! Effective inertias of the three ellipsoids from their semi-axes.
//!
//! Masses are in units of `rho * V_0`, with `V_0` the central body's volume and
//! the bodies as dense as the fluid.

use fluid_lgvi::added_mass::{normalized_inertia, Ellipsoid};

fn main() {
    let bodies = [
        ("body 0", Ellipsoid::new(8.0, 1.5, 2.0)),
        ("body 1", Ellipsoid::new(5.0, 0.8, 1.5)),
        ("body 2", Ellipsoid::new(5.0, 0.8, 1.5)),
    ];
    let v0 = bodies[0].1.volume();
    println!("reference volume V_0 = {v0:.4} m^3");
    for (name, e) in bodies {
        let n = normalized_inertia(&e, 1.0, 1.0, v0);
        let l = e.lamb_coefficients();
        println!("{name}: semi-axes {:?}", e.semi_axes.as_slice());
        println!("  Lamb coefficients   {:.5} {:.5} {:.5}", l[0], l[1], l[2]);
        println!("  M  = diag({:.4}, {:.4}, {:.4})", n.mass[(0, 0)], n.mass[(1, 1)], n.mass[(2, 2)]);
        println!("  J  = diag({:.4}, {:.4}, {:.4})", n.inertia[(0, 0)], n.inertia[(1, 1)], n.inertia[(2, 2)]);
        println!("  rigid m = {:.4}, J = diag({:.4}, {:.4}, {:.4})", n.rigid_mass[(0, 0)], n.rigid_inertia[(0, 0)], n.rigid_inertia[(1, 1)], n.rigid_inertia[(2, 2)]);
    }
}
