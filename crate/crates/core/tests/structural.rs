//! Structural invariants of the effective channels over many random draws,
//! plus an eigenvalue-based log-det oracle for fixed draws.

use nalgebra::{DMatrix, SymmetricEigen};
use ssaf::cbc::{
    build_cbc_effective, cbc_outage_indicator, preorder_relays, relayed_slots, CbcMode, RelayOrder,
};
use ssaf::channel::{draw_cbc, draw_cma, CbcChannelDraw, RngSpec, SnrPoint};
use ssaf::cma::{build_cma_effective, cma_outage_indicator};
use ssaf::{CMatrix, Complex64};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn snr(db: f64) -> SnrPoint {
    SnrPoint::from_db(db).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// `log2 det(I + rho Sigma^-1/2 H H^† Sigma^-1/2)` via eigendecompositions.
fn eigen_mi(h: &CMatrix, sigma: &CMatrix, rho: f64) -> f64 {
    let e = SymmetricEigen::new(sigma.clone());
    let inv_sqrt =
        DMatrix::from_diagonal(&e.eigenvalues.map(|x| Complex64::new(1.0 / x.sqrt(), 0.0)));
    let w = &e.eigenvectors * inv_sqrt * e.eigenvectors.adjoint();
    let m = &w * h * h.adjoint() * w.adjoint() * Complex64::new(rho, 0.0);
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|&x| (1.0 + x).log2())
        .sum()
}

// ---------------------------------------------------------------- CBC

#[test]
fn cbc_isolated_zero_pattern() {
    for t in 0..2000u64 {
        let n = 3 + (t % 8) as usize;
        let draw = draw_cbc(n, RngSpec::new(101, t), false).unwrap();
        let order = preorder_relays(&draw);
        for l in 1..=n {
            let eff = build_cbc_effective(&draw, &order, l, snr(15.0), CbcMode::Isolated).unwrap();
            let relayed = relayed_slots(n, l);
            assert!(eff.signal_matrix.column(l).iter().all(|&c| c == ZERO));
            for (row, &k) in eff.observed_slots.iter().enumerate() {
                for col in 0..=n {
                    let allowed = col + 1 == k || (col + 2 == k && relayed.contains(&k));
                    let c = eff.signal_matrix[(row, col)];
                    if allowed {
                        assert_ne!(c, ZERO, "t={t} l={l} slot {k} col {col}");
                    } else {
                        assert_eq!(c, ZERO, "t={t} l={l} slot {k} col {col}");
                    }
                }
                for col in 0..n {
                    if col != row {
                        assert_eq!(eff.noise_cov[(row, col)], ZERO);
                    }
                }
            }
        }
    }
}

#[test]
fn cbc_normalization_identity() {
    for t in 0..2000u64 {
        let n = 3 + (t % 8) as usize;
        let draw = draw_cbc(n, RngSpec::new(102, t), t % 2 == 0).unwrap();
        let order = preorder_relays(&draw);
        let rho = snr((t % 40) as f64 - 5.0);
        let r = rho.linear();
        for mode in [CbcMode::Isolated, CbcMode::Exact] {
            let eff = build_cbc_effective(&draw, &order, n.div_ceil(2), rho, mode).unwrap();
            for (i, f) in eff.normalization.iter().enumerate() {
                assert!(close(f.beta_sq * (f.received_power + 1.0), r, 1e-13));
                let me = order.dest_at(i + 1);
                // Every earlier relay radiates exactly rho, so the input power
                // is rho times the sum of incoming squared gains.
                let mut expect = r * draw.source_to_dest[me].norm_sqr();
                if mode == CbcMode::Exact && i > 0 {
                    expect += r * draw.dest_to_dest[(order.dest_at(i), me)].norm_sqr();
                }
                assert!(
                    close(f.received_power, expect, 1e-12),
                    "t={t} p={} {mode:?}",
                    i + 1
                );
            }
        }
    }
}

/// Zeroes the gains between consecutive chain positions, both directions.
fn cut_chain(draw: &CbcChannelDraw, order: &RelayOrder) -> CbcChannelDraw {
    let mut g = draw.dest_to_dest.clone();
    for p in 1..order.len() {
        let (a, b) = (order.dest_at(p), order.dest_at(p + 1));
        g[(a, b)] = ZERO;
        g[(b, a)] = ZERO;
    }
    CbcChannelDraw::from_gains(draw.source_to_dest.clone(), g).unwrap()
}

fn assert_matrix_close(a: &CMatrix, b: &CMatrix, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    let scale = a.iter().map(|c| c.norm()).fold(1.0, f64::max);
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).norm() <= tol * scale, "{x} vs {y}");
    }
}

#[test]
fn exact_reduces_to_isolated_without_chain_links() {
    for t in 0..1000u64 {
        let n = 3 + (t % 8) as usize;
        let draw = draw_cbc(n, RngSpec::new(103, t), false).unwrap();
        let order = preorder_relays(&draw);
        let cut = cut_chain(&draw, &order);
        let rho = snr(20.0);
        for l in 1..=n {
            let iso = build_cbc_effective(&draw, &order, l, rho, CbcMode::Isolated).unwrap();
            let exact = build_cbc_effective(&cut, &order, l, rho, CbcMode::Exact).unwrap();
            assert_matrix_close(&iso.signal_matrix, &exact.signal_matrix, 1e-14);
            assert_matrix_close(&iso.noise_cov, &exact.noise_cov, 1e-14);
            let (a, b) = (iso.frame_mi().unwrap().bits, exact.frame_mi().unwrap().bits);
            assert!(close(a, b, 1e-12));
        }
    }
}

#[test]
fn no_inter_destination_links_leaves_direct_slots() {
    for t in 0..500u64 {
        let n = 2 + (t % 9) as usize;
        let mut draw = draw_cbc(n, RngSpec::new(104, t), false).unwrap();
        draw.dest_to_dest.fill(ZERO);
        let order = preorder_relays(&draw);
        let rho = snr(10.0);
        for l in 1..=n {
            let h = draw.source_to_dest[order.dest_at(l)];
            let want = n as f64 * (1.0 + rho.linear() * h.norm_sqr()).log2();
            for mode in [CbcMode::Isolated, CbcMode::Exact] {
                let got = build_cbc_effective(&draw, &order, l, rho, mode)
                    .unwrap()
                    .frame_mi()
                    .unwrap()
                    .bits;
                assert!(close(got, want, 1e-12), "t={t} l={l} {mode:?}");
            }
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Whether `perm` is consistent with the greedy rule: each choice is optimal
/// among the destinations not yet chosen.
fn greedy_consistent(draw: &CbcChannelDraw, perm: &[usize]) -> bool {
    let s = |i: usize| draw.source_to_dest[i].norm_sqr();
    if perm.iter().any(|&i| s(i) > s(perm[0])) {
        return false;
    }
    (1..perm.len()).all(|p| {
        let g = |i: usize| draw.dest_to_dest[(perm[p - 1], i)].norm_sqr();
        perm[p..].iter().all(|&i| g(i) >= g(perm[p]))
    })
}

#[test]
fn preorder_matches_brute_force() {
    for n in 2..=8usize {
        let perms = permutations(n);
        let draws = if n == 8 { 4 } else { 40 };
        for t in 0..draws {
            let draw = draw_cbc(n, RngSpec::new(105, t), t % 2 == 1).unwrap();
            let consistent: Vec<&Vec<usize>> = perms
                .iter()
                .filter(|p| greedy_consistent(&draw, p))
                .collect();
            assert_eq!(consistent.len(), 1, "n={n} t={t}");
            assert_eq!(preorder_relays(&draw).as_slice(), consistent[0].as_slice());
        }
    }
}

#[test]
fn cbc_mi_nondecreasing_in_snr() {
    for t in 0..300u64 {
        let n = 3 + (t % 6) as usize;
        let draw = draw_cbc(n, RngSpec::new(106, t), false).unwrap();
        let order = preorder_relays(&draw);
        for mode in [CbcMode::Isolated, CbcMode::Exact] {
            let mut prev = 0.0;
            for db in (-10..=40).step_by(5) {
                let mi = build_cbc_effective(&draw, &order, n.div_ceil(2), snr(db as f64), mode)
                    .unwrap()
                    .frame_mi()
                    .unwrap()
                    .bits;
                assert!(mi >= prev - 1e-12, "t={t} {mode:?} {db} dB");
                prev = mi;
            }
        }
    }
}

#[test]
fn cbc_fixed_draw_matches_eigen_oracle() {
    let draw = draw_cbc(3, RngSpec::new(2024, 7), false).unwrap();
    let order = preorder_relays(&draw);
    for mode in [CbcMode::Isolated, CbcMode::Exact] {
        for db in [0.0, 10.0, 20.0] {
            let eff = build_cbc_effective(&draw, &order, 2, snr(db), mode).unwrap();
            let mi = eff.frame_mi().unwrap().bits;
            let oracle = eigen_mi(&eff.signal_matrix, &eff.noise_cov, snr(db).linear());
            assert!(
                close(mi, oracle, 1e-10),
                "{mode:?} {db} dB: {mi} vs {oracle}"
            );
            for rate in [0.25, 0.5, 1.0, 2.0, 4.0] {
                let want = oracle < 4.0 * rate;
                assert_eq!(cbc_outage_indicator(&eff, rate).unwrap(), want);
            }
        }
    }
}

// ---------------------------------------------------------------- CMA

#[test]
fn cma_structural_invariants() {
    for t in 0..10_000u64 {
        let m = 2 + (t % 4) as usize;
        let draw = draw_cma(m, RngSpec::new(201, t), t % 3 == 0).unwrap();
        let rho = snr((t % 35) as f64 - 5.0);
        let r = rho.linear();
        let eff = build_cma_effective(&draw, rho).unwrap();
        let h = &eff.signal_matrix;
        let split = 1.0 / (m as f64).sqrt();
        for l in 0..m {
            let hl = draw.source_to_dest[l];
            let mut beta_sum = 0.0;
            for k in 0..m {
                assert_eq!(h[(l, m + k)], ZERO);
                assert_eq!(h[(l, k)], if k == l { hl } else { ZERO });
                let lower_right = h[(m + l, m + k)];
                assert_eq!(lower_right, if k == l { hl * split } else { ZERO });
                if k == l {
                    assert_eq!(h[(m + l, k)], ZERO);
                    continue;
                }
                let g = draw.source_to_source[(k, l)];
                let beta_sq = r / (r * g.norm_sqr() + 1.0);
                beta_sum += beta_sq;
                let want = hl * split * beta_sq.sqrt() * g;
                assert!((h[(m + l, k)] - want).norm() <= 1e-14 * want.norm().max(1e-300));
            }
            assert_eq!(eff.noise_cov[(l, l)], Complex64::new(1.0, 0.0));
            let want = 1.0 + hl.norm_sqr() * beta_sum / m as f64;
            assert!(close(eff.noise_cov[(m + l, m + l)].re, want, 1e-14));
            assert!(close(eff.relay_slot_power(&draw, l), r, 1e-13));
        }
        for i in 0..2 * m {
            for j in 0..2 * m {
                if i != j {
                    assert_eq!(eff.noise_cov[(i, j)], ZERO);
                }
            }
        }
    }
}

#[test]
fn cma_mi_nondecreasing_in_snr() {
    for t in 0..500u64 {
        let draw = draw_cma(2 + (t % 4) as usize, RngSpec::new(202, t), false).unwrap();
        let mut prev = 0.0;
        for db in (-10..=40).step_by(5) {
            let mi = build_cma_effective(&draw, snr(db as f64))
                .unwrap()
                .frame_mi()
                .unwrap()
                .bits;
            assert!(mi >= prev - 1e-12);
            prev = mi;
        }
    }
}

#[test]
fn cma_without_inter_source_links_is_two_direct_observations() {
    let rho = snr(8.0);
    let r = rho.linear();
    for m in [2usize, 3, 5] {
        for t in 0..2000u64 {
            let mut draw = draw_cma(m, RngSpec::new(203, t), false).unwrap();
            draw.source_to_source.fill(ZERO);
            let eff = build_cma_effective(&draw, rho).unwrap();
            let mi: f64 = draw
                .source_to_dest
                .iter()
                .map(|h| {
                    (1.0 + r * h.norm_sqr()).log2() + (1.0 + r / m as f64 * h.norm_sqr()).log2()
                })
                .sum();
            for rate in [0.5, 1.0, 2.0] {
                assert_eq!(
                    cma_outage_indicator(&eff, rate).unwrap(),
                    mi < 2.0 * m as f64 * rate
                );
            }
        }
    }
}

#[test]
fn cma_fixed_draw_matches_eigen_oracle() {
    let draw = draw_cma(2, RngSpec::new(2024, 11), false).unwrap();
    for db in [0.0, 10.0, 20.0, 30.0] {
        let eff = build_cma_effective(&draw, snr(db)).unwrap();
        let mi = eff.frame_mi().unwrap().bits;
        let oracle = eigen_mi(&eff.signal_matrix, &eff.noise_cov, snr(db).linear());
        assert!(close(mi, oracle, 1e-10), "{db} dB: {mi} vs {oracle}");
        for rate in [0.25, 0.5, 1.0, 2.0, 4.0] {
            assert_eq!(
                cma_outage_indicator(&eff, rate).unwrap(),
                oracle < 4.0 * rate
            );
        }
    }
}
