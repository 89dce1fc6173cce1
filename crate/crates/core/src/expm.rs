//! Matrix exponential by scaling and squaring with Padé approximants.
//!
//! Follows Higham's 2005 selection of the approximant degree from the
//! 1-norm of the argument, so small arguments use a cheap low-order
//! approximant and large ones are scaled into the order-13 region.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Padé numerator/denominator pieces `(U, V)` for degrees 3 through 9.
fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut u_inner = &ident * coeffs[1];
    let mut v = &ident * coeffs[0];
    let mut power = ident.clone();
    for k in 1..coeffs.len() / 2 {
        power = &power * &a2;
        u_inner += &power * coeffs[2 * k + 1];
        v += &power * coeffs[2 * k];
    }
    (a * u_inner, v)
}

fn pade_13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE_13;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// Computes `exp(m)` for a square matrix.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            context: "matrix_exponential (square)",
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("matrix_exponential argument"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = one_norm(m);

    let low = THETA
        .iter()
        .find(|(_, theta)| norm <= *theta)
        .map(|(deg, _)| *deg);

    let (u, v, squarings) = match low {
        Some(deg) => {
            let coeffs: &[f64] = match deg {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(m, coeffs);
            (u, v, 0)
        }
        None => {
            let s = if norm > THETA_13 {
                (norm / THETA_13).log2().ceil().max(0.0) as i32
            } else {
                0
            };
            let scaled = m * 2f64.powi(-s);
            let (u, v) = pade_13(&scaled);
            (u, v, s)
        }
    };

    let denom = &v - &u;
    let numer = &v + &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::non_finite("matrix_exponential Padé denominator is singular"))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("matrix_exponential overflow"));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        (a - b).iter().map(|v| v.abs()).fold(0.0, f64::max) / scale
    }

    /// Taylor series summed in tiny increments: exp(M) = exp(M/2^k)^(2^k).
    fn taylor_reference(m: &DMatrix<f64>) -> DMatrix<f64> {
        let k = 20;
        let scaled = m / 2f64.powi(k);
        let n = m.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for j in 1..30 {
            term = &term * &scaled / (j as f64);
            sum += &term;
        }
        for _ in 0..k {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn zero_gives_identity() {
        let e = matrix_exponential(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_case() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let e = matrix_exponential(&m).unwrap();
        let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1f64.exp(),
            2f64.exp(),
        ]));
        assert!(max_rel_err(&e, &want) <= 1e-10);
    }

    #[test]
    fn rotation_generator() {
        for &(omega, t) in &[(1.0, 0.3), (314.159, 1e-3), (2.0, 7.5), (50.0, 2.0)] {
            let th: f64 = omega * t;
            let m = DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
            let e = matrix_exponential(&m).unwrap();
            let want = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
            assert!(max_rel_err(&e, &want) <= 1e-10, "theta {th}");
        }
    }

    #[test]
    fn every_degree_matches_reference() {
        // Norms chosen to land in each approximant band.
        let base = DMatrix::from_row_slice(3, 3, &[-0.4, 0.3, 0.1, 0.2, -0.7, 0.25, -0.1, 0.05, -0.2]);
        for scale in [0.01, 0.2, 0.9, 2.0, 5.0, 40.0] {
            let m = &base * scale;
            let e = matrix_exponential(&m).unwrap();
            let r = taylor_reference(&m);
            assert!(max_rel_err(&e, &r) <= 1e-10, "scale {scale}");
        }
    }

    #[test]
    fn nilpotent_truncates() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = matrix_exponential(&m).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]));
    }

    #[test]
    fn rejects_non_square_and_nan() {
        assert!(matrix_exponential(&DMatrix::zeros(2, 3)).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            matrix_exponential(&m),
            Err(Error::NonFinite { .. })
        ));
        let big = DMatrix::from_diagonal_element(2, 2, 1e6);
        assert!(matrix_exponential(&big).is_err());
    }
}
