//! Reference computations for the integration tests. None of these call the
//! library's numerical routines: they use closed forms, plain scalar
//! arithmetic and exhaustive enumeration with a hand-written linear solver.
#![allow(dead_code)]

pub const EX1_A: [[f64; 3]; 3] = [[5.0, 2.0, 1.0], [2.0, 5.0, 0.0], [1.0, 0.0, 6.0]];
pub const EX1_B: [f64; 3] = [0.0, -3.0, -5.5];
pub const EX1_LO: f64 = -1.0;
pub const EX1_HI: f64 = 10.0;
pub const EX1_X_STAR: [f64; 3] = [0.0, 0.4, 0.75];

/// Largest root of `det(A - lambda I)` for a symmetric 3x3 matrix, by the
/// trigonometric solution of the characteristic cubic.
pub fn cubic_largest_eigenvalue(a: [[f64; 3]; 3]) -> f64 {
    let tr = a[0][0] + a[1][1] + a[2][2];
    let minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] + a[1][1] * a[2][2]
        - a[1][2] * a[2][1];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    // lambda^3 - tr lambda^2 + minors lambda - det = 0; substitute lambda = t + tr/3
    let p = minors - tr * tr / 3.0;
    let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
    let r = (-p / 3.0).sqrt();
    let phi = (3.0 * q / (2.0 * p * r)).clamp(-1.0, 1.0).acos() / 3.0;
    let largest = 2.0 * r * phi.cos() + tr / 3.0;
    assert!(char_poly(a, largest).abs() < 1e-9, "not a root");
    largest
}

fn char_poly(a: [[f64; 3]; 3], l: f64) -> f64 {
    let m = |i: usize, j: usize| a[i][j] - if i == j { l } else { 0.0 };
    m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
}

pub fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

pub fn ex1_map(x: [f64; 3]) -> [f64; 3] {
    let mut f = EX1_B;
    for i in 0..3 {
        for j in 0..3 {
            f[i] += EX1_A[i][j] * x[j];
        }
    }
    f
}

/// One noise-free step on the first example, written out coordinate by coordinate.
pub fn ex1_scalar_step(x: [f64; 3], eta: f64) -> [f64; 3] {
    let f = ex1_map(x);
    let mut next = [0.0; 3];
    for i in 0..3 {
        let z = clamp(f[i] - eta * x[i], EX1_LO, EX1_HI);
        next[i] = x[i] - (f[i] - z) / eta;
    }
    next
}

/// Gap norm on the first example, coordinate by coordinate.
pub fn ex1_scalar_gap_norm(x: [f64; 3], eta: f64) -> f64 {
    let f = ex1_map(x);
    (0..3)
        .map(|i| {
            let h = (f[i] - clamp(f[i] - eta * x[i], EX1_LO, EX1_HI)) / eta;
            h * h
        })
        .sum::<f64>()
        .sqrt()
}

/// Gaussian elimination with partial pivoting; `None` for (near) singular systems.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (target, pivot) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *target -= factor * pivot;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

const KKT_TOL: f64 = 1e-10;

/// Projection of `u` onto `{lo <= y <= hi, L y <= b}` by enumerating every
/// assignment of each coordinate to {free, lower, upper} and each halfspace
/// to {inactive, active}, keeping the candidates that satisfy the KKT
/// conditions and returning the closest one.
pub fn qp_projection(u: &[f64], lo: &[f64], hi: &[f64], l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = u.len();
    let q = b.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32) << q;
    for code in 0..total {
        let halfmask = code & ((1 << q) - 1);
        let mut rest = code >> q;
        let mut state = vec![0u8; n];
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let active: Vec<usize> = (0..q).filter(|j| halfmask & (1 << j) != 0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut y = u.to_vec();
        for i in 0..n {
            match state[i] {
                1 => y[i] = lo[i],
                2 => y[i] = hi[i],
                _ => {}
            }
        }
        // free coordinates: y_F = u_F - L_AF' lambda, with L_A y = b_A
        let mut lambda = vec![0.0; active.len()];
        if !active.is_empty() {
            let gram: Vec<Vec<f64>> = active
                .iter()
                .map(|&r| active.iter().map(|&s| free.iter().map(|&i| l[r][i] * l[s][i]).sum()).collect())
                .collect();
            let rhs: Vec<f64> = active
                .iter()
                .map(|&r| (0..n).map(|i| l[r][i] * y[i]).sum::<f64>() - b[r])
                .collect();
            match solve_linear(gram, rhs) {
                Some(sol) => lambda = sol,
                None => continue,
            }
            if lambda.iter().any(|&v| v < -KKT_TOL) {
                continue;
            }
            for &i in &free {
                y[i] -= active.iter().zip(&lambda).map(|(&r, lam)| l[r][i] * lam).sum::<f64>();
            }
        }
        let feasible = (0..n).all(|i| y[i] >= lo[i] - KKT_TOL && y[i] <= hi[i] + KKT_TOL)
            && (0..q).all(|r| (0..n).map(|i| l[r][i] * y[i]).sum::<f64>() <= b[r] + KKT_TOL);
        if !feasible {
            continue;
        }
        // bound multipliers from stationarity must have the right sign
        let signs_ok = (0..n).all(|i| {
            let g = y[i] - u[i] + active.iter().zip(&lambda).map(|(&r, lam)| l[r][i] * lam).sum::<f64>();
            match state[i] {
                1 => g >= -KKT_TOL,
                2 => g <= KKT_TOL,
                _ => true,
            }
        });
        if !signs_ok {
            continue;
        }
        let d: f64 = y.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, y));
        }
    }
    best.expect("nonempty set has a projection").1
}

/// Solution of the LCP `a >= 0, Ma + r >= 0, a'(Ma + r) = 0` found by
/// trying every support.
pub fn lcp_enumeration(m: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = r.len();
    'support: for mask in 0u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut a = vec![0.0; n];
        if !s.is_empty() {
            let mss: Vec<Vec<f64>> = s.iter().map(|&i| s.iter().map(|&j| m[i][j]).collect()).collect();
            let rhs: Vec<f64> = s.iter().map(|&i| -r[i]).collect();
            let Some(sol) = solve_linear(mss, rhs) else {
                continue;
            };
            for (k, &i) in s.iter().enumerate() {
                if sol[k] < -KKT_TOL {
                    continue 'support;
                }
                a[i] = sol[k].max(0.0);
            }
        }
        let ok = (0..n).all(|i| (0..n).map(|j| m[i][j] * a[j]).sum::<f64>() + r[i] >= -KKT_TOL);
        if ok {
            return a;
        }
    }
    panic!("LCP with a positive definite matrix always has a solution")
}

/// `P(|T| <= t)` for Student's t with `dof` degrees of freedom, from the
/// finite series for integer degrees of freedom.
pub fn student_t_two_sided(t: f64, dof: usize) -> f64 {
    let theta = (t / (dof as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    if dof % 2 == 1 {
        let mut sum = 0.0;
        if dof > 1 {
            let mut term = 1.0;
            sum = 1.0;
            let mut k = 2.0;
            while k + 3.0 <= dof as f64 {
                term *= k / (k + 1.0) * c2;
                sum += term;
                k += 2.0;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * c * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while k + 3.0 <= dof as f64 {
            term *= k / (k + 1.0) * c2;
            sum += term;
            k += 2.0;
        }
        s * sum
    }
}

/// `t` with `P(|T| <= t) = 0.95`, by bisection.
pub fn t_quantile_975_reference(dof: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_two_sided(mid, dof) < 0.95 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Small deterministic generator for test inputs (xorshift64*).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        let bits = self.0.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11;
        lo + (hi - lo) * (bits as f64 / (1u64 << 53) as f64)
    }

    pub fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    /// `Q Q' + eps I` with `Q` uniform on [-1, 1].
    pub fn psd(&mut self, n: usize, eps: f64) -> Vec<Vec<f64>> {
        let q: Vec<Vec<f64>> = (0..n).map(|_| self.vec(n, -1.0, 1.0)).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| q[i][k] * q[j][k]).sum::<f64>() + if i == j { eps } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}
