//! Dense decompositions not covered reliably elsewhere.

use faer::Mat;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// `m = u · diag(s) · v_t` with `s` non-increasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<C64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<C64>,
}

/// Thin SVD. nalgebra's implementation does not converge reliably on
/// rank-deficient input, which is exactly the case the Schmidt and
/// operator-Schmidt tests need, so this goes through faer.
pub fn svd(m: &DMatrix<C64>) -> Result<Svd> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix passed to svd"));
    }
    let (r, c) = m.shape();
    let fm = Mat::<C64>::from_fn(r, c, |i, j| m[(i, j)]);
    let dec = fm
        .thin_svd()
        .map_err(|e| Error::InvalidInput(format!("svd did not converge: {e:?}")))?;
    let k = r.min(c);
    let (u, v, s) = (dec.U(), dec.V(), dec.S().column_vector());
    Ok(Svd {
        u: DMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        s: DVector::from_fn(k, |i, _| s[i].re),
        v_t: DMatrix::from_fn(k, c, |i, j| v[(j, i)].conj()),
    })
}
