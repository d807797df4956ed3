use super::RadialProfile;

/// Radial derivatives `U, U', U'', U''', U''''` at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivs {
    pub u: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
}

// quintic Hermite basis in monomial form: value, slope and curvature at t = 0
// then at t = 1
const BASIS: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
];

/// Piecewise quintic Hermite interpolant of a profile. One spline runs through
/// `(U, U', U'')`, a second through `(U', U'', U''')`; the higher derivatives
/// come from the second.
#[derive(Debug, Clone, Copy)]
pub struct ProfileInterp<'a> {
    profile: &'a RadialProfile,
}

fn hermite(data: [f64; 6], h: f64, t: f64) -> [f64; 4] {
    let scale = [1.0, h, h * h, 1.0, h, h * h];
    let mut c = [0.0; 6];
    for (k, row) in BASIS.iter().enumerate() {
        let d = data[k] * scale[k];
        for (ci, b) in c.iter_mut().zip(row) {
            *ci += d * b;
        }
    }
    let mut out = [0.0; 4];
    for (order, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for pw in (order..6).rev() {
            let mut f = 1.0;
            for q in 0..order {
                f *= (pw - q) as f64;
            }
            acc = acc * t + f * c[pw];
        }
        *slot = acc / h.powi(order as i32);
    }
    out
}

impl<'a> ProfileInterp<'a> {
    pub fn new(profile: &'a RadialProfile) -> Self {
        ProfileInterp { profile }
    }

    pub fn profile(&self) -> &RadialProfile {
        self.profile
    }

    /// Derivatives at radius `r ≥ 0`; zero beyond the grid.
    pub fn eval(&self, r: f64) -> Derivs {
        let p = self.profile;
        let h = p.grid.h;
        let k = p.u.len() - 1;
        let r = r.abs();
        if r >= p.grid.r_max() {
            return Derivs::default();
        }
        let i = ((r / h) as usize).min(k - 1);
        let t = (r - i as f64 * h) / h;
        let j = i + 1;
        let a = hermite([p.u[i], p.u1[i], p.u2[i], p.u[j], p.u1[j], p.u2[j]], h, t);
        let b = hermite(
            [p.u1[i], p.u2[i], p.u3[i], p.u1[j], p.u2[j], p.u3[j]],
            h,
            t,
        );
        Derivs {
            u: a[0],
            u1: a[1],
            u2: a[2],
            u3: b[2],
            u4: b[3],
        }
    }
}
