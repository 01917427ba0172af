//! Brute-force reference: the Taylor series `w(z) = Σ (iz)ⁿ / Γ(n/2 + 1)`
//! summed in double-double arithmetic, with the remainder bounded before
//! stopping. Usable for `|z| ≤ 6`, where cancellation costs at most
//! sixteen of the roughly thirty-two available digits.

use num_complex::Complex64;

#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn quick(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let s = quick(s.0, s.1 + t.0);
        quick(s.0, s.1 + t.1)
    }
    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        quick(p, e + self.0 * o.1 + self.1 * o.0)
    }
    fn div_f(self, d: f64) -> Dd {
        let q1 = self.0 / d;
        let p = q1 * d;
        let e = q1.mul_add(d, -p);
        let r = (self.0 - p - e + self.1) / d;
        quick(q1, r)
    }
}

#[derive(Clone, Copy)]
struct Cdd(Dd, Dd);

impl Cdd {
    fn mul(self, o: Cdd) -> Cdd {
        Cdd(
            self.0.mul(o.0).add(self.1.mul(o.1).neg()),
            self.0.mul(o.1).add(self.1.mul(o.0)),
        )
    }
}

pub fn faddeeva_series(z: Complex64) -> Complex64 {
    assert!(z.norm() <= 6.0, "series oracle limited to |z| <= 6");
    let iz = Cdd(Dd(-z.im, 0.0), Dd(z.re, 0.0));
    // 1/Γ(n/2+1) for n = 0 and n = 1 (2/√π split into hi + lo)
    let mut coef = [Dd(1.0, 0.0), Dd(std::f64::consts::FRAC_2_SQRT_PI, 1.533545961316588e-17)];
    let mut pw = Cdd(Dd(1.0, 0.0), Dd(0.0, 0.0));
    let mut sum = Cdd(Dd(0.0, 0.0), Dd(0.0, 0.0));
    let r = z.norm();
    for n in 0..4000usize {
        let c = coef[n % 2];
        sum = Cdd(sum.0.add(pw.0.mul(c)), sum.1.add(pw.1.mul(c)));
        coef[n % 2] = c.div_f(n as f64 / 2.0 + 1.0);
        pw = pw.mul(iz);
        // terms decrease geometrically once n/2 > r²; bound the tail by
        // twice the next term in magnitude
        let next = r.powi(n as i32 + 1) * coef[(n + 1) % 2].0;
        if (n as f64) > 2.0 * r * r + 4.0 && 2.0 * next < 1e-32 {
            break;
        }
    }
    Complex64::new(sum.0 .0 + sum.0 .1, sum.1 .0 + sum.1 .1)
}

/// `erfcx(u) = w(iu)` via the series.
pub fn erfcx_series(u: Complex64) -> Complex64 {
    faddeeva_series(Complex64::i() * u)
}

/// Laplace continued fraction for `w(z)`, accurate for large `|z|` with
/// `Im z > 0`.
pub fn faddeeva_cf(z: Complex64) -> Complex64 {
    let mut t = Complex64::new(0.0, 0.0);
    for k in (1..=400).rev() {
        t = (k as f64 / 2.0) / (z - t);
    }
    Complex64::i() / std::f64::consts::PI.sqrt() / (z - t)
}
