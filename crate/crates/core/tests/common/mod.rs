#![allow(dead_code)]

pub mod oracle;

use lfa::refine::{loss_and_grad, LossKind, LossParams};
use lfa::{FeatureMatrix, Mat, PrototypeMatrix, Rng};

use oracle::{Evaluated, Rows};

pub fn to_rows(m: &Mat<f64>) -> Rows {
    m.row_iter().map(|r| r.to_vec()).collect()
}

pub fn unit_rows(rng: &mut Rng, rows: usize, cols: usize) -> Mat<f64> {
    FeatureMatrix::new(&rng.gaussian_matrix(rows, cols, 1.0)).unwrap().matrix().clone()
}

/// A random loss evaluation point: unit features, unit prototypes, labels and
/// a map near the identity.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Mat<f64>,
    pub labels: Vec<usize>,
    pub w: Mat<f64>,
    pub y: PrototypeMatrix<f64>,
}

pub fn random_instance(rng: &mut Rng) -> Instance {
    let d = 2 + rng.below(7);
    let c = 2 + rng.below(5);
    let n = 4 + rng.below(9);
    let x = unit_rows(rng, n, d);
    let y = PrototypeMatrix::unnamed(&unit_rows(rng, c, d)).unwrap();
    let labels = (0..n).map(|_| rng.below(c)).collect();
    let w = Mat::identity(d).add(&rng.gaussian_matrix(d, d, 0.5)).unwrap();
    Instance { x, labels, w, y }
}

pub fn oracle_eval(kind: LossKind, inst: &Instance, w: &Rows, p: &LossParams) -> Evaluated {
    let x = to_rows(&inst.x);
    let y = to_rows(inst.y.matrix());
    match kind {
        LossKind::Arerank => oracle::arerank(&x, &inst.labels, w, &y, p.k, p.s),
        LossKind::Triplet => oracle::triplet(&x, &inst.labels, w, &y, p.k, p.triplet_margin),
        LossKind::Contrastive => oracle::contrastive(&x, &inst.labels, w, &y, p.tau),
        LossKind::Csls => oracle::csls(&x, &inst.labels, w, &y, p.k, p.tau),
    }
}

pub const FD_STEP: f64 = 1e-5;
/// Instances closer than this to a kink of the loss are redrawn.
pub const KINK_CLEARANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub instances: usize,
    pub redrawn: usize,
    pub max_rel_error: f64,
    pub max_loss_error: f64,
}

/// Compares the analytic gradient with central differences of the oracle on
/// `count` smooth, non-trivial instances.
pub fn check_gradients(kind: LossKind, count: usize, seed: u64) -> GradientCheck {
    let params = LossParams::default();
    let mut rng = Rng::new(seed);
    let mut out = GradientCheck {
        instances: 0,
        redrawn: 0,
        max_rel_error: 0.0,
        max_loss_error: 0.0,
    };
    while out.instances < count {
        let inst = random_instance(&mut rng);
        let w = to_rows(&inst.w);
        let at = oracle_eval(kind, &inst, &w, &params);
        let (loss, grad) = loss_and_grad(kind, &inst.x, &inst.labels, &inst.w, &inst.y, &params).unwrap();
        if at.kink_gap < KINK_CLEARANCE || at.loss == 0.0 {
            out.redrawn += 1;
            continue;
        }
        let fd = oracle::fd_gradient(&w, FD_STEP, |probe| oracle_eval(kind, &inst, probe, &params).loss);
        out.max_rel_error = out.max_rel_error.max(oracle::relative_error(&to_rows(&grad), &fd));
        out.max_loss_error = out.max_loss_error.max((loss - at.loss).abs() / at.loss.abs().max(1.0));
        out.instances += 1;
    }
    out
}
