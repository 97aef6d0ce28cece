//! Polytropic-gas thermodynamics, one-step Arrhenius kinetics, and the
//! bijection between primitive states and the characteristic working
//! variables `(omega, p, B, S, Y)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Temperature floor used when evaluating the reaction rate. Evaluations
/// below the floor are clamped (and counted by the caller), never rejected.
pub const T_MIN: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GasError {
    #[error("non-positive {field}: {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("mass fraction out of [0, 1]: {0}")]
    MassFractionRange(f64),
    #[error("axial velocity must be positive, got {0}")]
    NonPositiveAxialVelocity(f64),
    #[error("subsonic/vacuum state: kinetic-energy radicand {0} is not positive")]
    VacuumState(f64),
    #[error("invalid gas constants: {0}")]
    InvalidConstants(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Gas and kinetics constants. `cv` is derived from `gamma` and `r` at
/// construction and kept so the entropy inversion stays explicit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GasConstants {
    pub gamma: f64,
    pub r: f64,
    pub cv: f64,
    pub s0: f64,
    pub q0: f64,
    pub arrhenius_e: f64,
    pub arrhenius_theta: f64,
}

impl GasConstants {
    pub fn new(
        gamma: f64,
        r: f64,
        s0: f64,
        q0: f64,
        arrhenius_e: f64,
        arrhenius_theta: f64,
    ) -> Result<Self, GasError> {
        for (name, v) in [
            ("gamma", gamma),
            ("r", r),
            ("s0", s0),
            ("q0", q0),
            ("arrhenius_e", arrhenius_e),
            ("arrhenius_theta", arrhenius_theta),
        ] {
            if !v.is_finite() {
                return Err(GasError::InvalidConstants(format!("{name} is not finite")));
            }
        }
        if gamma <= 1.0 {
            return Err(GasError::InvalidConstants(format!("gamma must be > 1, got {gamma}")));
        }
        if r <= 0.0 {
            return Err(GasError::InvalidConstants(format!("r must be > 0, got {r}")));
        }
        if q0 < 0.0 {
            return Err(GasError::InvalidConstants(format!("q0 must be >= 0, got {q0}")));
        }
        if arrhenius_e <= 0.0 {
            return Err(GasError::InvalidConstants(format!(
                "arrhenius_e must be > 0, got {arrhenius_e}"
            )));
        }
        if arrhenius_theta < 0.0 {
            return Err(GasError::InvalidConstants(format!(
                "arrhenius_theta must be >= 0, got {arrhenius_theta}"
            )));
        }
        Ok(GasConstants {
            gamma,
            r,
            cv: r / (gamma - 1.0),
            s0,
            q0,
            arrhenius_e,
            arrhenius_theta,
        })
    }

    /// Entropy function `A(S) = (gamma - 1) exp((S - S0)/cv)`.
    pub fn a_of_s(&self, s: f64) -> f64 {
        (self.gamma - 1.0) * ((s - self.s0) / self.cv).exp()
    }

    /// Arrhenius rate `T^theta exp(-E/(R T))`, with `T` clamped to [`T_MIN`].
    pub fn reaction_rate(&self, t: f64) -> f64 {
        let tc = t.max(T_MIN);
        tc.powf(self.arrhenius_theta) * (-self.arrhenius_e / (self.r * tc)).exp()
    }

    /// Whether a reaction-rate evaluation at `t` would hit the clamp.
    pub fn rate_clamped(&self, t: f64) -> bool {
        t < T_MIN
    }
}

/// Primitive flow state at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerState {
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub rho: f64,
    pub y: f64,
}

impl EulerState {
    pub fn validate(&self) -> Result<(), GasError> {
        for (name, v) in [
            ("u", self.u),
            ("v", self.v),
            ("p", self.p),
            ("rho", self.rho),
            ("y", self.y),
        ] {
            if !v.is_finite() {
                return Err(GasError::NonFinite(name));
            }
        }
        if self.p <= 0.0 {
            return Err(GasError::NonPositive { field: "p", value: self.p });
        }
        if self.rho <= 0.0 {
            return Err(GasError::NonPositive { field: "rho", value: self.rho });
        }
        if !(0.0..=1.0).contains(&self.y) {
            return Err(GasError::MassFractionRange(self.y));
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

/// Working variables transported by the marching solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharState {
    pub omega: f64,
    pub p: f64,
    pub b: f64,
    pub s: f64,
    pub y: f64,
}

/// Derived thermodynamic view of a primitive state.
#[derive(Debug, Clone, Copy)]
pub struct ThermoView {
    pub c: f64,
    pub mach: f64,
    pub t: f64,
    pub a_of_s: f64,
}

/// Sound speed, Mach number, temperature, and entropy-function value.
pub fn thermo(state: &EulerState, g: &GasConstants) -> Result<ThermoView, GasError> {
    if state.p <= 0.0 {
        return Err(GasError::NonPositive { field: "p", value: state.p });
    }
    if state.rho <= 0.0 {
        return Err(GasError::NonPositive { field: "rho", value: state.rho });
    }
    let c = (g.gamma * state.p / state.rho).sqrt();
    Ok(ThermoView {
        c,
        mach: state.speed() / c,
        t: state.p / (g.r * state.rho),
        a_of_s: state.p / state.rho.powf(g.gamma),
    })
}

/// Bernoulli function and entropy of a primitive state.
///
/// `B = (u^2 + v^2)/2 + gamma p / ((gamma - 1) rho)` and `S` inverts
/// `A(S) = p / rho^gamma`.
pub fn bernoulli_entropy(state: &EulerState, g: &GasConstants) -> (f64, f64) {
    let b = 0.5 * (state.u * state.u + state.v * state.v)
        + g.gamma * state.p / ((g.gamma - 1.0) * state.rho);
    let a = state.p / state.rho.powf(g.gamma);
    let s = g.s0 + g.cv * (a / (g.gamma - 1.0)).ln();
    (b, s)
}

/// Primitive state to working variables. Requires `u > 0`.
pub fn char_from_euler(state: &EulerState, g: &GasConstants) -> Result<CharState, GasError> {
    state.validate()?;
    if state.u <= 0.0 {
        return Err(GasError::NonPositiveAxialVelocity(state.u));
    }
    let (b, s) = bernoulli_entropy(state, g);
    Ok(CharState {
        omega: state.v / state.u,
        p: state.p,
        b,
        s,
        y: state.y,
    })
}

/// Working variables back to the primitive state.
///
/// `rho = A(S)^{-1/gamma} p^{1/gamma}` and the speed comes from solving
/// the Bernoulli relation for the kinetic energy.
pub fn euler_from_char(cs: &CharState, g: &GasConstants) -> Result<EulerState, GasError> {
    if cs.p <= 0.0 {
        return Err(GasError::NonPositive { field: "p", value: cs.p });
    }
    let a = g.a_of_s(cs.s);
    let a_pow = a.powf(1.0 / g.gamma);
    let radicand = (g.gamma - 1.0) * cs.b - g.gamma * a_pow * cs.p.powf(1.0 - 1.0 / g.gamma);
    if radicand <= 0.0 {
        return Err(GasError::VacuumState(radicand));
    }
    let rho = cs.p.powf(1.0 / g.gamma) / a_pow;
    let u = (2.0 * radicand / ((g.gamma - 1.0) * (1.0 + cs.omega * cs.omega))).sqrt();
    Ok(EulerState {
        u,
        v: cs.omega * u,
        p: cs.p,
        rho,
        y: cs.y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gas() -> GasConstants {
        GasConstants::new(1.4, 1.0, 0.0, 0.0, 2.0, 1.0).unwrap()
    }

    fn upper_bg() -> EulerState {
        EulerState { u: 2.0, v: 0.0, p: 1.0, rho: 1.4, y: 0.0 }
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn thermo_background_upper() {
        let tv = thermo(&upper_bg(), &gas()).unwrap();
        assert_close(tv.c, 1.0, 1e-15);
        assert_close(tv.mach, 2.0, 1e-15);
        assert_close(tv.t, 5.0 / 7.0, 1e-14);
        assert_close(tv.a_of_s, 1.4f64.powf(-1.4), 1e-15);
        assert_close(tv.a_of_s, 0.6243394, 1e-7);
    }

    #[test]
    fn thermo_background_lower() {
        let st = EulerState { u: 3.0, v: 0.0, p: 1.0, rho: 0.7, y: 0.0 };
        let tv = thermo(&st, &gas()).unwrap();
        assert_close(tv.c, std::f64::consts::SQRT_2, 1e-15);
        assert_close(tv.mach, 2.1213203, 1e-6);
    }

    #[test]
    fn thermo_rejects_nonpositive_fields() {
        let mut st = upper_bg();
        st.p = 0.0;
        let err = thermo(&st, &gas()).unwrap_err().to_string();
        assert!(err.contains('p'), "{err}");
        let mut st = upper_bg();
        st.rho = -1.0;
        let err = thermo(&st, &gas()).unwrap_err().to_string();
        assert!(err.contains("rho"), "{err}");
    }

    #[test]
    fn mach_is_axial_when_v_zero() {
        for u in [1.3, 2.0, 3.7] {
            let st = EulerState { u, v: 0.0, p: 0.9, rho: 1.1, y: 0.0 };
            let tv = thermo(&st, &gas()).unwrap();
            assert_eq!(tv.mach, u / tv.c);
        }
    }

    #[test]
    fn sound_speed_identity() {
        let tv = thermo(&upper_bg(), &gas()).unwrap();
        let lhs = tv.c * tv.c * 1.4;
        let rhs = 1.4 * 1.0;
        assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs.abs());
    }

    #[test]
    fn reaction_rate_reference_value() {
        let g = gas();
        let t = 5.0 / 7.0;
        let rate = g.reaction_rate(t);
        assert_close(rate, t * (-2.8f64).exp(), 1e-15);
        assert_close(rate, 0.0434358, 5e-8);
    }

    #[test]
    fn reaction_rate_free_limit() {
        // theta = 0 with vanishing activation energy tends to 1 for all T
        let g = GasConstants::new(1.4, 1.0, 0.0, 0.0, 1e-14, 0.0).unwrap();
        for t in [0.1, 0.5, 1.0, 3.0] {
            assert_close(g.reaction_rate(t), 1.0, 1e-12);
        }
    }

    #[test]
    fn reaction_rate_monotone_in_t() {
        for theta in [0.0, 1.0, 2.0] {
            let g = GasConstants::new(1.4, 1.0, 0.0, 0.0, 2.0, theta).unwrap();
            let mut prev = 0.0;
            for i in 1..200 {
                let t = 0.05 + 0.025 * i as f64;
                let r = g.reaction_rate(t);
                assert!(r >= prev, "rate not monotone at T={t}");
                prev = r;
            }
        }
    }

    #[test]
    fn reaction_rate_clamps_below_floor() {
        let g = gas();
        assert!(g.rate_clamped(0.0));
        assert_eq!(g.reaction_rate(0.0), g.reaction_rate(T_MIN));
        assert!(g.reaction_rate(0.0) >= 0.0);
    }

    #[test]
    fn bernoulli_entropy_background() {
        let g = gas();
        let (b, s) = bernoulli_entropy(&upper_bg(), &g);
        assert_close(b, 4.5, 1e-14);
        assert_close(s, 1.1130740, 1e-7);
        // inverse-function identity
        let a = g.a_of_s(s);
        assert_close(a, 1.0 / 1.4f64.powf(1.4), 1e-12 * a);
    }

    #[test]
    fn char_from_euler_example() {
        let g = gas();
        let st = EulerState { u: 2.0, v: 0.02, p: 1.0, rho: 1.4, y: 0.0 };
        let cs = char_from_euler(&st, &g).unwrap();
        assert_close(cs.omega, 0.01, 1e-16);
        assert_close(cs.p, 1.0, 0.0);
        assert_close(cs.b, 4.5002, 1e-12);
        assert_close(cs.s, 1.1130740, 1e-7);
        assert_eq!(cs.y, 0.0);
    }

    #[test]
    fn char_from_euler_rejects_nonpositive_u() {
        let g = gas();
        let st = EulerState { u: 0.0, v: 0.1, p: 1.0, rho: 1.0, y: 0.0 };
        assert!(matches!(
            char_from_euler(&st, &g),
            Err(GasError::NonPositiveAxialVelocity(_))
        ));
    }

    #[test]
    fn euler_from_char_inverts_background() {
        let g = gas();
        let cs = char_from_euler(&upper_bg(), &g).unwrap();
        let back = euler_from_char(&cs, &g).unwrap();
        assert_close(back.u, 2.0, 1e-12);
        assert_close(back.v, 0.0, 1e-12);
        assert_close(back.rho, 1.4, 1e-12);
        // seven-digit rounded inputs still land close
        let rounded = CharState { omega: 0.0, p: 1.0, b: 4.5, s: 1.1130740, y: 0.0 };
        let st = euler_from_char(&rounded, &g).unwrap();
        assert_close(st.u, 2.0, 1e-5);
        assert_close(st.rho, 1.4, 1e-5);
    }

    #[test]
    fn euler_from_char_zero_radicand_errors() {
        let g = gas();
        let (_, s) = bernoulli_entropy(&upper_bg(), &g);
        // choose B so the radicand is exactly the stagnation boundary
        let a_pow = g.a_of_s(s).powf(1.0 / g.gamma);
        let b = g.gamma * a_pow / (g.gamma - 1.0);
        let cs = CharState { omega: 0.0, p: 1.0, b, s, y: 0.0 };
        match euler_from_char(&cs, &g) {
            Err(GasError::VacuumState(r)) => assert!(r <= 0.0),
            other => panic!("expected vacuum-state error, got {other:?}"),
        }
    }

    #[test]
    fn speed_decreases_with_flow_slope() {
        let g = gas();
        let base = char_from_euler(&upper_bg(), &g).unwrap();
        let mut prev_u = f64::INFINITY;
        for i in 0..21 {
            let omega = 0.01 * i as f64;
            let cs = CharState { omega, ..base };
            let st = euler_from_char(&cs, &g).unwrap();
            assert!(st.u < prev_u || i == 0);
            // symmetric in the sign of omega
            let neg = euler_from_char(&CharState { omega: -omega, ..base }, &g).unwrap();
            assert_close(st.u, neg.u, 1e-15);
            prev_u = st.u;
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            u in 1.5f64..4.0,
            omega in -0.3f64..0.3,
            p in 0.5f64..2.0,
            rho in 0.4f64..2.0,
            y in 0.0f64..1.0,
        ) {
            let g = gas();
            let st = EulerState { u, v: omega * u, p, rho, y };
            let c = (g.gamma * p / rho).sqrt();
            prop_assume!(u > 1.05 * c);
            let cs = char_from_euler(&st, &g).unwrap();
            let back = euler_from_char(&cs, &g).unwrap();
            for (a, b) in [
                (back.u, st.u),
                (back.v, st.v),
                (back.p, st.p),
                (back.rho, st.rho),
                (back.y, st.y),
            ] {
                let scale = b.abs().max(1.0);
                prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
            // entropy function stays positive and consistent
            let a_s = g.a_of_s(cs.s);
            prop_assert!(a_s > 0.0);
            let direct = p / rho.powf(g.gamma);
            prop_assert!((a_s - direct).abs() <= 1e-12 * direct);
        }
    }
}
