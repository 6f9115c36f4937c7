//! Straightforward reference implementations of the refinement losses on plain
//! nested vectors, used to cross-check the library and to build
//! finite-difference gradients.

#![allow(dead_code)]

pub type Rows = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn matmul(x: &Rows, w: &Rows) -> Rows {
    x.iter()
        .map(|row| (0..w[0].len()).map(|c| (0..row.len()).map(|k| row[k] * w[k][c]).sum()).collect())
        .collect()
}

fn cosine(z: &[f64], y: &[f64]) -> f64 {
    dot(z, y) / dot(z, z).sqrt() / dot(y, y).sqrt()
}

/// Hinge loss value plus the distance to the nearest non-differentiable
/// configuration (an active-set flip or a neighbor reordering).
pub struct Evaluated {
    pub loss: f64,
    pub kink_gap: f64,
}

/// `margin(gt, j)` gives the hinge margin for a sample of class `gt` against class `j`.
pub fn hinge(x: &Rows, labels: &[usize], w: &Rows, y: &Rows, k: usize, margin: impl Fn(usize, usize) -> f64) -> Evaluated {
    let z = matmul(x, w);
    let c = y.len();
    let mut total = 0.0;
    let mut gap = f64::INFINITY;
    for (zi, &gt) in z.iter().zip(labels) {
        let d: Vec<f64> = y.iter().map(|yj| dist(zi, yj)).collect();
        let mut others: Vec<usize> = (0..c).filter(|&j| j != gt).collect();
        others.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
        let k_eff = k.min(c - 1);
        if k_eff < others.len() {
            gap = gap.min(d[others[k_eff]] - d[others[k_eff - 1]]);
        }
        gap = gap.min(d[gt]);
        let mut sample = 0.0;
        for &j in &others[..k_eff] {
            let h = d[gt] - d[j] + margin(gt, j);
            gap = gap.min(h.abs());
            sample += h.max(0.0);
        }
        total += sample / k_eff as f64;
    }
    Evaluated {
        loss: total / z.len() as f64,
        kink_gap: gap,
    }
}

pub fn arerank(x: &Rows, labels: &[usize], w: &Rows, y: &Rows, k: usize, s: f64) -> Evaluated {
    hinge(x, labels, w, y, k, |a, b| (1.0 - dot(&y[a], &y[b])) / s)
}

pub fn triplet(x: &Rows, labels: &[usize], w: &Rows, y: &Rows, k: usize, m: f64) -> Evaluated {
    hinge(x, labels, w, y, k, |_, _| m)
}

fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub fn contrastive(x: &Rows, labels: &[usize], w: &Rows, y: &Rows, tau: f64) -> Evaluated {
    let z = matmul(x, w);
    let total: f64 = z
        .iter()
        .zip(labels)
        .map(|(zi, &gt)| {
            let logits: Vec<f64> = y.iter().map(|yj| cosine(zi, yj) / tau).collect();
            cross_entropy(&logits, gt)
        })
        .sum();
    Evaluated {
        loss: total / z.len() as f64,
        kink_gap: f64::INFINITY,
    }
}

pub fn csls(x: &Rows, labels: &[usize], w: &Rows, y: &Rows, k: usize, tau: f64) -> Evaluated {
    let z = matmul(x, w);
    let n = z.len();
    let k_eff = k.min(n).max(1);
    let mut gap = f64::INFINITY;
    let r: Vec<f64> = y
        .iter()
        .map(|yj| {
            let mut sims: Vec<f64> = z.iter().map(|zi| cosine(zi, yj)).collect();
            sims.sort_by(|a, b| b.total_cmp(a));
            if k_eff < n {
                gap = gap.min(sims[k_eff - 1] - sims[k_eff]);
            }
            sims[..k_eff].iter().sum::<f64>() / k_eff as f64
        })
        .collect();
    let total: f64 = z
        .iter()
        .zip(labels)
        .map(|(zi, &gt)| {
            let logits: Vec<f64> = y.iter().zip(&r).map(|(yj, rj)| (2.0 * cosine(zi, yj) - rj) / tau).collect();
            cross_entropy(&logits, gt)
        })
        .sum();
    Evaluated {
        loss: total / n as f64,
        kink_gap: gap,
    }
}

/// Central differences of `f` at `w`, one entry at a time.
pub fn fd_gradient(w: &Rows, h: f64, f: impl Fn(&Rows) -> f64) -> Rows {
    let mut g = vec![vec![0.0; w[0].len()]; w.len()];
    let mut probe = w.clone();
    for r in 0..w.len() {
        for c in 0..w[0].len() {
            probe[r][c] = w[r][c] + h;
            let up = f(&probe);
            probe[r][c] = w[r][c] - h;
            let down = f(&probe);
            probe[r][c] = w[r][c];
            g[r][c] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, or 0 when both vanish.
pub fn relative_error(a: &Rows, b: &Rows) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (&u, &v) in ra.iter().zip(rb) {
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    let scale = na.max(nb).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
