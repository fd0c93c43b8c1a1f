use std::collections::BTreeSet;

use proptest::prelude::*;
use stflow::assembly::{Assembler, WellSpec};
use stflow::exec::Execution;
use stflow::mesh::{CoarseGrid, MeshLevels, SpaceTimeMesh};
use stflow::physics::FluidModel;
use stflow::state::{State, StepStart};
use stflow::upscaling::RockField;

fn mesh() -> SpaceTimeMesh {
    let m = SpaceTimeMesh::build_coarse(CoarseGrid::new(3, 3, 10.0, 10.0, 5.0), MeshLevels { space: 1, time: 1 }).unwrap();
    m.refine_temporal(&BTreeSet::from([4])).unwrap()
}

fn max_rel_error(asm: &Assembler, x: &[f64]) -> f64 {
    let sys = asm.jacobian(x).unwrap();
    let dense = sys.matrix.to_dense();
    let n = x.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let rp = asm.residual(&xp).unwrap();
        let rm = asm.residual(&xm).unwrap();
        let col_scale = (0..n).map(|i| dense[i][j].abs()).fold(0.0, f64::max).max(1e-12);
        for i in 0..n {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max((fd - dense[i][j]).abs() / col_scale);
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn jacobian_matches_finite_differences(
        p in prop::collection::vec(900.0f64..1100.0, 9 + 1),
        s in prop::collection::vec(0.25f64..0.75, 9 + 1),
        u in prop::collection::vec(prop_oneof![-50.0f64..-1.0, 1.0f64..50.0], 64),
        gravity in prop::bool::ANY,
    ) {
        let mesh = mesh();
        prop_assert_eq!(mesh.num_elements(), 10);
        let mut model = FluidModel::default();
        if gravity {
            model.fluid.gravity = [0.0, 32.174];
        }
        let rock = RockField::homogeneous(3, 3, 1, 50.0, 0.2);
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.3);
        let wells = [WellSpec::injector(0, 0, 1.0), WellSpec::producer(5, 5, 950.0).with_radius(0.1)];
        let asm = Assembler::new(&mesh, &model, &rock, &wells, &start, Execution::Sequential).unwrap();
        let mut state = State::uniform(&mesh, 1000.0, 0.3);
        state.pressure.copy_from_slice(&p);
        state.saturation.copy_from_slice(&s);
        let mut k = 0;
        for f in mesh.subfaces().iter().filter(|f| f.is_interior()) {
            for a in 0..2 {
                state.aux_flux[a][f.id] = u[k % u.len()];
                k += 1;
            }
        }
        let x = asm.dofs.pack(&state);
        let err = max_rel_error(&asm, &x);
        prop_assert!(err <= 1e-5, "relative error {err}");
    }
}
