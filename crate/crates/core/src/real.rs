use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerics are generic over: f32 or f64.
pub trait Real: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant")
}

#[cfg(test)]
mod tests {
    use super::*;
    #[test]
    fn probe_api() {
        fn generic<T: Real>(x: T) -> (T, T, T, bool) {
            let a = nalgebra::ComplexField::abs(x);
            (x.ln(), x.sqrt(), a, x.is_finite())
        }
        let (l, s, a, f) = generic(4.0_f64);
        assert!((l - 4.0_f64.ln()).abs() < 1e-15);
        assert_eq!(s, 2.0);
        assert_eq!(a, 4.0);
        assert!(f);
        let m = nalgebra::DMatrix::<f64>::identity(3, 3);
        let sv = m.clone().singular_values();
        assert_eq!(sv.len(), 3);
        let se = m.clone().symmetric_eigen();
        assert_eq!(se.eigenvalues.len(), 3);
        assert!(m.clone().cholesky().is_some());
        let q = m.qr().q();
        assert_eq!(q.ncols(), 3);
        assert_eq!(real::<f32>(0.5), 0.5f32);
    }
}
