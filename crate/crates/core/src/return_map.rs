//! First-return map `L(x, y) = (α(x), β(x, y))` on `Σ ∖ Γ`, its
//! one-dimensional factor α, itineraries and periodic orbits.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{CrossSectionPoint, GeometricLorenzParams, Side};

/// The subset of [`GeometricLorenzParams`] the return map depends on, plus
/// `lambda1` and `tau_tube` for flight times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapParams {
    pub k: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub exponent_y: f64,
    pub lambda1: f64,
    pub tau_tube: f64,
}

impl From<&GeometricLorenzParams> for ReturnMapParams {
    fn from(p: &GeometricLorenzParams) -> Self {
        Self {
            k: p.k,
            a: p.a,
            b: p.b,
            c: p.c,
            exponent_y: p.exponent_y(),
            lambda1: p.lambda1,
            tau_tube: p.tau_tube,
        }
    }
}

impl ReturnMapParams {
    /// α restricted to one side of Γ, extended continuously to `x = 0`
    /// (value `−sign`). Used on monotone branches.
    pub fn alpha_on(&self, side: Side, x: f64) -> f64 {
        side.sign() * (self.k * x.abs().powf(self.a) - 1.0)
    }

    /// Inverse of α on one side; `None` outside that branch's image.
    pub fn alpha_inverse(&self, side: Side, u: f64) -> Option<f64> {
        let s = side.sign();
        let r = (s * u + 1.0) / self.k;
        if !(0.0..=1.0).contains(&r) {
            return None;
        }
        Some(s * r.powf(1.0 / self.a))
    }

    /// `[lo, hi]` image of the closed side `[0, 1]` or `[−1, 0]` under α.
    pub fn branch_image(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Plus => (-1.0, self.k - 1.0),
            Side::Minus => (1.0 - self.k, 1.0),
        }
    }

    /// Flight time from `(x, ·, 1)` back to Σ: block transit plus tube.
    pub fn return_time(&self, x: f64) -> f64 {
        -x.abs().ln() / self.lambda1 + self.tau_tube
    }

    /// `∂β/∂y = b |x|^(λ2/λ1)`.
    pub fn beta_dy(&self, x: f64) -> f64 {
        self.b * x.abs().powf(self.exponent_y)
    }

    /// `∂β/∂x` for `x ≠ 0`.
    pub fn beta_dx(&self, x: f64, y: f64) -> f64 {
        self.b * y * self.exponent_y * x.abs().powf(self.exponent_y - 1.0) * x.signum()
    }

    pub fn beta(&self, x: f64, y: f64) -> f64 {
        Side::of(x).sign() * self.c + self.b * y * x.abs().powf(self.exponent_y)
    }
}

/// The one-dimensional factor `α(x) = sign(x)(k|x|^a − 1)`.
pub fn alpha(params: &ReturnMapParams, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::DomainGamma);
    }
    Ok(params.alpha_on(Side::of(x), x))
}

/// `α'(x) = k a |x|^(a−1)`.
pub fn alpha_prime(params: &ReturnMapParams, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::DomainGamma);
    }
    Ok(params.k * params.a * x.abs().powf(params.a - 1.0))
}

#[allow(non_snake_case)]
pub fn apply_L(params: &ReturnMapParams, p: &CrossSectionPoint) -> Result<CrossSectionPoint> {
    let x = alpha(params, p.x)?;
    Ok(CrossSectionPoint::new(x, params.beta(p.x, p.y)))
}

/// Jacobian of L at `p`: `[[α', 0], [∂β/∂x, ∂β/∂y]]`.
pub fn jacobian(params: &ReturnMapParams, p: &CrossSectionPoint) -> Result<[[f64; 2]; 2]> {
    let ap = alpha_prime(params, p.x)?;
    Ok([[ap, 0.0], [params.beta_dx(p.x, p.y), params.beta_dy(p.x)]])
}

/// Sign word of `x` before each return.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Itinerary {
    pub word: Vec<Side>,
}

impl Itinerary {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// Word `index` in binary, most significant symbol first; bit 1 is `−`.
    pub fn from_index(index: usize, n: usize) -> Self {
        let word = (0..n)
            .map(|i| {
                if (index >> (n - 1 - i)) & 1 == 1 {
                    Side::Minus
                } else {
                    Side::Plus
                }
            })
            .collect();
        Self { word }
    }

    /// True if the word is not a repetition of a shorter word.
    pub fn is_primitive(&self) -> bool {
        let n = self.word.len();
        (1..n)
            .filter(|d| n.is_multiple_of(*d))
            .all(|d| (0..n).any(|i| self.word[i] != self.word[i % d]))
    }
}

impl fmt::Display for Itinerary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.word {
            f.write_str(match s {
                Side::Plus => "+",
                Side::Minus => "-",
            })?;
        }
        Ok(())
    }
}

/// Iterates L `n` times; stops with `DomainGamma` if the orbit hits Γ.
pub fn iterate(
    params: &ReturnMapParams,
    p: &CrossSectionPoint,
    n: usize,
) -> Result<(Vec<CrossSectionPoint>, Itinerary)> {
    let mut points = Vec::with_capacity(n + 1);
    let mut word = Vec::with_capacity(n);
    let mut cur = *p;
    points.push(cur);
    for _ in 0..n {
        word.push(Side::of(cur.x));
        cur = apply_L(params, &cur)?;
        points.push(cur);
    }
    Ok((points, Itinerary { word }))
}

/// A periodic point of L with its lifted flow period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub x_star: f64,
    pub y_star: f64,
    pub period_n: usize,
    pub flow_period: f64,
    pub itinerary: Itinerary,
}

impl PeriodicPoint {
    pub fn point(&self) -> CrossSectionPoint {
        CrossSectionPoint::new(self.x_star, self.y_star)
    }

    /// The n points of the cycle, starting at `(x*, y*)`.
    pub fn cycle(&self, params: &ReturnMapParams) -> Vec<CrossSectionPoint> {
        let mut out = Vec::with_capacity(self.period_n);
        let mut p = self.point();
        for _ in 0..self.period_n {
            out.push(p);
            p = apply_L(params, &p).expect("periodic orbit avoids Γ");
        }
        out
    }

    /// Derivative of `αⁿ` at `x*`; the unstable multiplier.
    pub fn unstable_multiplier(&self, params: &ReturnMapParams) -> f64 {
        self.cycle(params)
            .iter()
            .map(|p| alpha_prime(params, p.x).expect("periodic orbit avoids Γ"))
            .product()
    }

    /// Product of `∂β/∂y` along the cycle; the stable multiplier.
    pub fn stable_multiplier(&self, params: &ReturnMapParams) -> f64 {
        self.cycle(params)
            .iter()
            .map(|p| params.beta_dy(p.x))
            .product()
    }
}

/// Closed branch `{x : sign(α^{i}(x)) = word[i]}` of `αⁿ`, or `None` if empty.
pub fn branch_interval(params: &ReturnMapParams, itinerary: &Itinerary) -> Option<(f64, f64)> {
    let side_interval = |s: Side| -> (f64, f64) {
        match s {
            Side::Plus => (0.0, 1.0),
            Side::Minus => (-1.0, 0.0),
        }
    };
    let mut iter = itinerary.word.iter().rev();
    let mut cur = side_interval(*iter.next()?);
    for &s in iter {
        let (img_lo, img_hi) = params.branch_image(s);
        let lo = cur.0.max(img_lo);
        let hi = cur.1.min(img_hi);
        if lo > hi {
            return None;
        }
        let a = params.alpha_inverse(s, lo)?;
        let b = params.alpha_inverse(s, hi)?;
        cur = (a.min(b), a.max(b));
    }
    Some(cur)
}

fn alpha_along(params: &ReturnMapParams, itinerary: &Itinerary, x: f64) -> f64 {
    itinerary
        .word
        .iter()
        .fold(x, |acc, &s| params.alpha_on(s, acc))
}

/// Bisection tolerance on x for periodic points.
pub const PERIODIC_TOL: f64 = 1e-12;

/// All points of prime period `n` of α, lifted to L, sorted by `x*`.
///
/// Each of the `2ⁿ` sign branches of `αⁿ` is monotone increasing with slope
/// above `(k a)ⁿ > 1`, so it holds at most one fixed point; bisection finds it.
/// Branches whose image does not straddle the diagonal are skipped; a period
/// with no root on any branch gives an empty list.
pub fn find_periodic(params: &GeometricLorenzParams, n: usize) -> Result<Vec<PeriodicPoint>> {
    if n == 0 {
        return Err(Error::NoneFound("period must be positive".into()));
    }
    if n > 24 {
        return Err(Error::NoneFound(format!(
            "period {n} exceeds the branch enumeration limit"
        )));
    }
    let rp = ReturnMapParams::from(params);
    let mut found: Vec<PeriodicPoint> = (0..(1usize << n))
        .into_par_iter()
        .filter_map(|idx| {
            let itinerary = Itinerary::from_index(idx, n);
            if !itinerary.is_primitive() {
                return None;
            }
            let (lo, hi) = branch_interval(&rp, &itinerary)?;
            let g = |x: f64| alpha_along(&rp, &itinerary, x) - x;
            let (mut a, mut b) = (lo, hi);
            let (ga, gb) = (g(a), g(b));
            if ga > 0.0 || gb < 0.0 {
                return None;
            }
            while b - a > PERIODIC_TOL {
                let m = 0.5 * (a + b);
                if g(m) <= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let x_star = 0.5 * (a + b);
            lift_periodic(&rp, x_star, itinerary).ok()
        })
        .collect();
    found.sort_by(|p, q| p.x_star.partial_cmp(&q.x_star).unwrap());
    Ok(found)
}

/// Recovers `y*` as the fixed point of the contracting y-map along the cycle
/// and accumulates the flow period.
fn lift_periodic(rp: &ReturnMapParams, x_star: f64, itinerary: Itinerary) -> Result<PeriodicPoint> {
    let n = itinerary.len();
    let mut xs = Vec::with_capacity(n);
    let mut x = x_star;
    for &s in &itinerary.word {
        if x == 0.0 || Side::of(x) != s {
            return Err(Error::DomainGamma);
        }
        xs.push(x);
        x = rp.alpha_on(s, x);
    }
    let cycle_y = |y0: f64| xs.iter().fold(y0, |y, &xi| rp.beta(xi, y));
    let mut y = 0.0;
    for _ in 0..10_000 {
        let next = cycle_y(y);
        let done = (next - y).abs() <= 1e-16;
        y = next;
        if done {
            break;
        }
    }
    let flow_period = xs.iter().map(|&xi| rp.return_time(xi)).sum();
    Ok(PeriodicPoint {
        x_star,
        y_star: y,
        period_n: n,
        flow_period,
        itinerary,
    })
}

/// The periodic orbit used downstream: lowest prime period found, represented
/// by its smallest positive `x*`.
pub fn lowest_period_orbit(params: &GeometricLorenzParams, max_n: usize) -> Result<PeriodicPoint> {
    for n in 1..=max_n {
        if let Ok(points) = find_periodic(params, n) {
            if let Some(p) = points.iter().find(|p| p.x_star > 0.0) {
                return Ok(p.clone());
            }
        }
    }
    Err(Error::NoneFound(format!(
        "no periodic orbit up to period {max_n}"
    )))
}

/// Periodic-orbit catalog as CSV: `n,x_star,y_star,flow_period,itinerary`.
pub fn catalog_csv(points: &[PeriodicPoint]) -> String {
    let mut out = String::from("n,x_star,y_star,flow_period,itinerary\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.period_n, p.x_star, p.y_star, p.flow_period, p.itinerary
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::first_return_by_flow;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gp() -> GeometricLorenzParams {
        GeometricLorenzParams::default()
    }

    fn rp() -> ReturnMapParams {
        ReturnMapParams::from(&gp())
    }

    #[test]
    fn alpha_limits_and_endpoint() {
        let p = rp();
        assert!((alpha(&p, 1e-12).unwrap() + 1.0).abs() < 1e-6);
        assert_relative_eq!(alpha(&p, 1.0).unwrap(), 0.9, epsilon = 1e-15);
        assert_eq!(alpha(&p, 0.0), Err(Error::DomainGamma));
        assert_eq!(alpha_prime(&p, 0.0), Err(Error::DomainGamma));
    }

    #[test]
    fn catalog_lists_each_orbit() {
        let pts = find_periodic(&gp(), 2).unwrap();
        let csv = catalog_csv(&pts);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,x_star,y_star,flow_period,itinerary"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), pts.len());
        for (row, p) in rows.iter().zip(&pts) {
            assert_eq!(row[0], "2");
            assert_eq!(row[1].parse::<f64>().unwrap(), p.x_star);
            assert_eq!(row[4].len(), 2);
        }
    }

    #[test]
    fn alpha_prime_values() {
        let p = rp();
        assert_relative_eq!(alpha_prime(&p, 1.0).unwrap(), 1.52, epsilon = 1e-14);
        let near_zero = alpha_prime(&p, 1e-6).unwrap();
        assert_relative_eq!(near_zero, 1.52 * 10f64.powf(1.2), max_relative = 1e-12);
        assert!((near_zero - 24.09).abs() < 0.01);
    }

    #[test]
    fn apply_l_example() {
        let p = rp();
        let q = apply_L(&p, &CrossSectionPoint::new(0.25, 0.5)).unwrap();
        // Independent evaluation of 0.25^0.8 through exp/log.
        let pow = (0.8 * 0.25f64.ln()).exp();
        assert_relative_eq!(q.x, 1.9 * pow - 1.0, epsilon = 1e-14);
        assert_relative_eq!(q.x, -0.373233, epsilon = 1e-6);
        assert_relative_eq!(q.y, 0.609375, epsilon = 1e-15);
        assert_eq!(
            apply_L(&p, &CrossSectionPoint::new(0.0, 0.3)),
            Err(Error::DomainGamma)
        );
    }

    #[test]
    fn uniform_expansion_on_grid() {
        let p = rp();
        let min = (1..=100_000)
            .map(|i| alpha_prime(&p, i as f64 / 100_000.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= p.k * p.a - 1e-12);
        assert!(min > 2f64.sqrt());
    }

    #[test]
    fn no_fixed_point() {
        let p = rp();
        for i in 1..=10_000 {
            let x = i as f64 / 10_000.0;
            assert!(alpha(&p, x).unwrap() - x < 0.0);
        }
        assert!(find_periodic(&gp(), 1).unwrap().is_empty());
    }

    #[test]
    fn period_two_orbit() {
        let orbits = find_periodic(&gp(), 2).unwrap();
        assert!(!orbits.is_empty());
        let p = rp();
        for o in &orbits {
            let a2 = alpha(&p, alpha(&p, o.x_star).unwrap()).unwrap();
            assert!((a2 - o.x_star).abs() < 1e-10);
            let (pts, itin) = iterate(&p, &o.point(), 2).unwrap();
            assert!(pts[2].distance(&o.point()) < 1e-9);
            assert_eq!(itin, o.itinerary);
        }
        assert!(orbits.windows(2).all(|w| w[0].x_star < w[1].x_star));
    }

    #[test]
    fn lifted_orbit_closes_in_flow() {
        let g = gp();
        for n in 2..=4 {
            for o in find_periodic(&g, n).unwrap() {
                let end = crate::flow::flow(&g, &o.point().to_state(), o.flow_period).unwrap();
                assert!(end.distance(&o.point().to_state()) < 1e-6, "n={n} {:?}", o);
            }
        }
    }

    #[test]
    fn lowest_orbit_is_period_two() {
        let o = lowest_period_orbit(&gp(), 6).unwrap();
        assert_eq!(o.period_n, 2);
        assert!(o.x_star > 0.0);
        assert!(o.unstable_multiplier(&rp()) > 2.0);
        assert!(o.stable_multiplier(&rp()) < 1.0);
    }

    #[test]
    fn branch_counts_grow() {
        // Every primitive branch holds at most one root.
        let g = gp();
        for n in 2..=8 {
            let orbits = find_periodic(&g, n).unwrap();
            let mut words: Vec<String> = orbits.iter().map(|o| o.itinerary.to_string()).collect();
            let count = words.len();
            words.dedup();
            assert_eq!(words.len(), count);
        }
    }

    fn nonzero() -> impl Strategy<Value = f64> {
        prop_oneof![-1.0..-1e-6f64, 1e-6..1.0f64]
    }

    proptest! {
        #[test]
        fn alpha_is_odd(x in nonzero()) {
            let p = rp();
            prop_assert_eq!(alpha(&p, -x).unwrap(), -alpha(&p, x).unwrap());
        }

        #[test]
        fn alpha_prime_matches_finite_difference(x in prop_oneof![-0.9..-0.1f64, 0.1..0.9f64]) {
            let p = rp();
            let h = 1e-7;
            let fd = (alpha(&p, x + h).unwrap() - alpha(&p, x - h).unwrap()) / (2.0 * h);
            prop_assert!((alpha_prime(&p, x).unwrap() - fd).abs() < 1e-6);
        }

        #[test]
        fn l_is_odd(x in nonzero(), y in -1.0..1.0f64) {
            let p = rp();
            let a = apply_L(&p, &CrossSectionPoint::new(x, y)).unwrap();
            let b = apply_L(&p, &CrossSectionPoint::new(-x, -y)).unwrap();
            prop_assert_eq!((a.x, a.y), (-b.x, -b.y));
        }

        #[test]
        fn x_factor_ignores_y(x in nonzero(), y1 in -1.0..1.0f64, y2 in -1.0..1.0f64) {
            let p = rp();
            let a = apply_L(&p, &CrossSectionPoint::new(x, y1)).unwrap();
            let b = apply_L(&p, &CrossSectionPoint::new(x, y2)).unwrap();
            prop_assert_eq!(a.x, b.x);
        }

        #[test]
        fn y_contraction_bounded(x in nonzero()) {
            let p = rp();
            prop_assert!(p.beta_dy(x).abs() <= p.b);
        }

        #[test]
        fn l_agrees_with_flow(x in nonzero(), y in -1.0..1.0f64) {
            let g = gp();
            let p = CrossSectionPoint::new(x, y);
            let by_map = apply_L(&rp(), &p).unwrap();
            let (_, by_flow) = first_return_by_flow(&g, &p).unwrap();
            prop_assert!(by_map.distance(&by_flow) < 1e-9);
        }
    }
}
