//! Map families and their exact evaluation, inverse and differential.
//!
//! A [`MapSpec::Perturbed`] map is built from a base map by successive layers. Layer `k`
//! turns `g` into `outer_k ∘ g ∘ inner_k`, where for a bump `h` and reversor `R` with
//! twin `T = R ∘ h⁻¹ ∘ R`:
//!
//! | placement | inner | outer |
//! |-----------|-------|-------|
//! | `pre`     | `h`   | `T` (twin) or id |
//! | `post`    | `T` (twin) or id | `h` |
//!
//! `R ∘ g ∘ R = g⁻¹` holds algebraically after every twinned layer. Operations whose
//! support does not contain the current point return it untouched, so evaluation outside
//! every support follows the base map's code path bit for bit.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bump::{Bump, BumpError};
use crate::involution::{InvolutionError, InvolutionSpec};
use crate::linalg::{int, Mat2, Vec2};
use crate::scalar::Scalar;
use crate::torus::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("bump {id}: {source}")]
    Bump { id: usize, source: BumpError },
    #[error("linear automorphism {0:?} must have determinant 1")]
    BadMatrix([[i64; 2]; 2]),
    #[error("twinned layer {0} needs a reversor on the perturbed map")]
    MissingReversor(usize),
    #[error(transparent)]
    Involution(#[from] InvolutionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Layer<T> {
    pub placement: Placement,
    #[serde(default)]
    pub twin: bool,
    pub bump: Bump<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Perturbed<T> {
    pub base: Box<MapSpec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversor: Option<InvolutionSpec<T>>,
    #[serde(default)]
    pub layers: Vec<Layer<T>>,
    #[serde(skip)]
    index: OnceLock<LayerIndex>,
}

impl<T: PartialEq> PartialEq for Perturbed<T> {
    fn eq(&self, o: &Self) -> bool {
        self.base == o.base && self.reversor == o.reversor && self.layers == o.layers
    }
}

/// Layers with fewer entries are scanned linearly.
const INDEX_MIN_LAYERS: usize = 8;
const INDEX_CELLS: usize = 64;

/// Bucket grid listing, per cell, the layers whose bump disk meets the cell (ascending ids).
#[derive(Debug, Clone)]
struct LayerIndex {
    cells: Vec<Vec<u32>>,
}

impl LayerIndex {
    fn build<T: Scalar>(layers: &[Layer<T>]) -> Self {
        let g = INDEX_CELLS as i64;
        let mut cells = vec![Vec::new(); INDEX_CELLS * INDEX_CELLS];
        for (id, l) in layers.iter().enumerate() {
            let (cx, cy) = (l.bump.center.x.as_f64(), l.bump.center.y.as_f64());
            let rho = l.bump.outer_radius.as_f64();
            let span = |c: f64| (((c - rho) * g as f64).floor() as i64, ((c + rho) * g as f64).floor() as i64);
            let (x0, x1) = span(cx);
            let (y0, y1) = span(cy);
            let mut seen = Vec::new();
            for yi in y0..=y1.min(y0 + g - 1) {
                for xi in x0..=x1.min(x0 + g - 1) {
                    let c = (yi.rem_euclid(g) * g + xi.rem_euclid(g)) as usize;
                    if !seen.contains(&c) {
                        seen.push(c);
                        cells[c].push(id as u32);
                    }
                }
            }
        }
        LayerIndex { cells }
    }

    fn cell<T: Scalar>(&self, p: Point<T>) -> &[u32] {
        let g = INDEX_CELLS;
        let c = |v: T| ((v.as_f64() * g as f64) as usize).min(g - 1);
        &self.cells[c(p.y) * g + c(p.x)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum MapSpec<T> {
    /// `y' = y + (k/2π) sin 2πx`, `x' = x + y'`.
    Standard { k: T },
    /// `p ↦ M p (mod 1)` with integer `M`, `det M = 1`.
    LinearAuto { matrix: [[i64; 2]; 2] },
    Identity,
    Perturbed(Perturbed<T>),
}

#[derive(Clone, Copy)]
enum Op {
    Bump,
    Twin,
}

impl<T: Scalar> MapSpec<T> {
    pub fn standard(k: T) -> Self {
        MapSpec::Standard { k }
    }

    pub fn linear_auto(matrix: [[i64; 2]; 2]) -> Result<Self, MapError> {
        if int::det(&matrix) != 1 {
            return Err(MapError::BadMatrix(matrix));
        }
        Ok(MapSpec::LinearAuto { matrix })
    }

    pub fn cat() -> Self {
        MapSpec::LinearAuto { matrix: [[2, 1], [1, 1]] }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        match self {
            MapSpec::Standard { .. } | MapSpec::Identity => Ok(()),
            MapSpec::LinearAuto { matrix } => {
                if int::det(matrix) != 1 {
                    Err(MapError::BadMatrix(*matrix))
                } else {
                    Ok(())
                }
            }
            MapSpec::Perturbed(p) => {
                p.base.validate()?;
                for (id, l) in p.layers.iter().enumerate() {
                    l.bump.validate().map_err(|source| MapError::Bump { id, source })?;
                    if l.twin && p.reversor.is_none() {
                        return Err(MapError::MissingReversor(id));
                    }
                }
                if let Some(r) = &p.reversor {
                    r.fix_set()?;
                }
                Ok(())
            }
        }
    }

    /// The map with all perturbation layers stripped.
    pub fn root(&self) -> &MapSpec<T> {
        match self {
            MapSpec::Perturbed(p) => p.base.root(),
            m => m,
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        match self {
            MapSpec::Perturbed(p) => &p.layers,
            _ => &[],
        }
    }

    /// Adds a layer, flattening nested perturbations. `reversor` is recorded if none is set.
    pub fn with_layer(&self, layer: Layer<T>, reversor: Option<&InvolutionSpec<T>>) -> MapSpec<T> {
        self.with_layers(std::iter::once(layer), reversor)
    }

    /// Adds several layers in order (see [`MapSpec::with_layer`]).
    pub fn with_layers(&self, layers: impl IntoIterator<Item = Layer<T>>, reversor: Option<&InvolutionSpec<T>>) -> MapSpec<T> {
        let mut p = match self {
            MapSpec::Perturbed(p) => p.clone(),
            m => Perturbed { base: Box::new(m.clone()), reversor: None, layers: Vec::new(), index: OnceLock::new() },
        };
        p.index = OnceLock::new();
        if p.reversor.is_none() {
            p.reversor = reversor.cloned();
        }
        p.layers.extend(layers);
        MapSpec::Perturbed(p)
    }

    /// A reversor shipped with the family, if one is known.
    pub fn builtin_reversor(&self) -> Option<InvolutionSpec<T>> {
        match self {
            MapSpec::Standard { k } => Some(InvolutionSpec::standard(*k)),
            MapSpec::LinearAuto { matrix } => linear_reversor(matrix).map(|m| InvolutionSpec::Linear { matrix: m, fix: None }),
            MapSpec::Identity => Some(InvolutionSpec::Linear { matrix: [[-1, 0], [0, 1]], fix: None }),
            MapSpec::Perturbed(p) => p.reversor.clone().or_else(|| p.base.builtin_reversor()),
        }
    }

    fn base_eval(&self, p: Point<T>) -> Point<T> {
        match self {
            MapSpec::Standard { k } => {
                let y = p.y + *k / T::TAU() * (T::TAU() * p.x).sin();
                Point::new(p.x + y, y)
            }
            MapSpec::LinearAuto { matrix: m } => {
                let row = |r: [i64; 2]| T::from_int(r[0]) * p.x + T::from_int(r[1]) * p.y;
                Point::new(row(m[0]), row(m[1]))
            }
            MapSpec::Identity => p,
            MapSpec::Perturbed(_) => unreachable!(),
        }
    }

    fn base_inverse(&self, p: Point<T>) -> Point<T> {
        match self {
            MapSpec::Standard { k } => {
                let x = p.x - p.y;
                let y = p.y - *k / T::TAU() * (T::TAU() * x).sin();
                Point::new(x, y)
            }
            MapSpec::LinearAuto { matrix } => {
                let m = int::inverse_unimodular(matrix);
                let row = |r: [i64; 2]| T::from_int(r[0]) * p.x + T::from_int(r[1]) * p.y;
                Point::new(row(m[0]), row(m[1]))
            }
            MapSpec::Identity => p,
            MapSpec::Perturbed(_) => unreachable!(),
        }
    }

    fn base_differential(&self, p: Point<T>) -> Mat2<T> {
        match self {
            MapSpec::Standard { k } => {
                let c = *k * (T::TAU() * p.x).cos();
                Mat2::new(T::one() + c, T::one(), c, T::one())
            }
            MapSpec::LinearAuto { matrix } => Mat2::from_int(*matrix),
            MapSpec::Identity => Mat2::identity(),
            MapSpec::Perturbed(_) => unreachable!(),
        }
    }

    pub fn eval(&self, p: Point<T>) -> Result<Point<T>, MapError> {
        match self {
            MapSpec::Perturbed(g) => Ok(g.run(p, true, false)?.0),
            m => Ok(m.base_eval(p)),
        }
    }

    pub fn eval_inverse(&self, p: Point<T>) -> Result<Point<T>, MapError> {
        match self {
            MapSpec::Perturbed(g) => Ok(g.run(p, false, false)?.0),
            m => Ok(m.base_inverse(p)),
        }
    }

    pub fn differential(&self, p: Point<T>) -> Result<Mat2<T>, MapError> {
        Ok(self.eval_with_differential(p)?.1)
    }

    pub fn eval_with_differential(&self, p: Point<T>) -> Result<(Point<T>, Mat2<T>), MapError> {
        match self {
            MapSpec::Perturbed(g) => g.run(p, true, true),
            m => Ok((m.base_eval(p), m.base_differential(p))),
        }
    }

    /// `f⁻¹(p)` together with `D(f⁻¹)` at `p`.
    pub fn inverse_with_differential(&self, p: Point<T>) -> Result<(Point<T>, Mat2<T>), MapError> {
        match self {
            MapSpec::Perturbed(g) => g.run(p, false, true),
            m => {
                let q = m.base_inverse(p);
                let d = m.base_differential(q);
                Ok((q, d.inverse().unwrap_or_else(|| d.adjugate())))
            }
        }
    }

    pub fn iterate(&self, mut p: Point<T>, n: usize) -> Result<Point<T>, MapError> {
        for _ in 0..n {
            p = self.eval(p)?;
        }
        Ok(p)
    }

    /// `[p, f(p), …, fⁿ(p)]`.
    pub fn orbit(&self, p: Point<T>, n: usize) -> Result<Vec<Point<T>>, MapError> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(p);
        let mut q = p;
        for _ in 0..n {
            q = self.eval(q)?;
            out.push(q);
        }
        Ok(out)
    }
}

impl<T: Scalar> Perturbed<T> {
    fn reversor(&self) -> &InvolutionSpec<T> {
        self.reversor.as_ref().expect("validated: twinned layers carry a reversor")
    }

    /// Applies one operation (or its inverse) at `q`, updating the running Jacobian.
    fn apply(&self, id: usize, op: Op, inverse: bool, q: Point<T>, jac: Option<&mut Mat2<T>>) -> Result<Point<T>, MapError> {
        let bump = &self.layers[id].bump;
        let err = |source| MapError::Bump { id, source };
        match op {
            Op::Bump => {
                if !bump.contains(q) {
                    return Ok(q);
                }
                match jac {
                    Some(j) => {
                        let (out, d) = if inverse {
                            bump.inverse_with_differential(q).map_err(err)?
                        } else {
                            bump.eval_with_differential(q).map_err(err)?
                        };
                        *j = d * *j;
                        Ok(out)
                    }
                    None => {
                        if inverse {
                            bump.eval_inverse(q).map_err(err)
                        } else {
                            bump.eval(q).map_err(err)
                        }
                    }
                }
            }
            Op::Twin => {
                // T = R h⁻¹ R, T⁻¹ = R h R
                let r = self.reversor();
                let rq = r.apply(q);
                if !bump.contains(rq) {
                    return Ok(q);
                }
                match jac {
                    Some(j) => {
                        let (mid, d) = if inverse {
                            bump.eval_with_differential(rq).map_err(err)?
                        } else {
                            bump.inverse_with_differential(rq).map_err(err)?
                        };
                        *j = r.differential(mid) * d * r.differential(q) * *j;
                        Ok(r.apply(mid))
                    }
                    None => {
                        let mid = if inverse { bump.eval(rq) } else { bump.eval_inverse(rq) }.map_err(err)?;
                        Ok(r.apply(mid))
                    }
                }
            }
        }
    }

    fn inner(&self, id: usize) -> Option<Op> {
        let l = &self.layers[id];
        match l.placement {
            Placement::Pre => Some(Op::Bump),
            Placement::Post => l.twin.then_some(Op::Twin),
        }
    }

    fn outer(&self, id: usize) -> Option<Op> {
        let l = &self.layers[id];
        match l.placement {
            Placement::Pre => l.twin.then_some(Op::Twin),
            Placement::Post => Some(Op::Bump),
        }
    }

    pub fn new(base: MapSpec<T>, reversor: Option<InvolutionSpec<T>>, layers: Vec<Layer<T>>) -> Self {
        Perturbed { base: Box::new(base), reversor, layers, index: OnceLock::new() }
    }

    fn op(&self, id: usize, outer: bool) -> Option<Op> {
        if outer {
            self.outer(id)
        } else {
            self.inner(id)
        }
    }

    /// Next layer (below `bound` when descending, above it when ascending) whose op acts at `q`.
    fn next_active(&self, q: Point<T>, bound: Option<usize>, descending: bool, outer: bool) -> Option<(usize, Op)> {
        let index = self.index.get_or_init(|| LayerIndex::build(&self.layers));
        let rq = self.reversor.as_ref().map(|r| r.apply(q));
        let admissible = |id: usize| match bound {
            None => true,
            Some(b) => (descending && id < b) || (!descending && id > b),
        };
        let mut best: Option<(usize, Op)> = None;
        let mut scan = |list: &[u32], want: fn(Op) -> bool, z: Point<T>| {
            let mut consider = |id: usize| {
                if !admissible(id) {
                    return false;
                }
                match self.op(id, outer) {
                    Some(op) if want(op) && self.layers[id].bump.contains(z) => {
                        let better = match best {
                            None => true,
                            Some((b, _)) => (descending && id > b) || (!descending && id < b),
                        };
                        if better {
                            best = Some((id, op));
                        }
                        true
                    }
                    _ => false,
                }
            };
            if descending {
                for &id in list.iter().rev() {
                    if consider(id as usize) {
                        break;
                    }
                }
            } else {
                for &id in list.iter() {
                    if consider(id as usize) {
                        break;
                    }
                }
            }
        };
        scan(index.cell(q), |op| matches!(op, Op::Bump), q);
        if let Some(rq) = rq {
            scan(index.cell(rq), |op| matches!(op, Op::Twin), rq);
        }
        best
    }

    fn pass(&self, q: &mut Point<T>, jac: &mut Mat2<T>, want_jac: bool, descending: bool, outer: bool, inverse: bool) -> Result<(), MapError> {
        let n = self.layers.len();
        if n < INDEX_MIN_LAYERS {
            let ids: Box<dyn Iterator<Item = usize>> = if descending { Box::new((0..n).rev()) } else { Box::new(0..n) };
            for id in ids {
                if let Some(op) = self.op(id, outer) {
                    *q = self.apply(id, op, inverse, *q, if want_jac { Some(&mut *jac) } else { None })?;
                }
            }
            return Ok(());
        }
        let mut bound = None;
        while let Some((id, op)) = self.next_active(*q, bound, descending, outer) {
            *q = self.apply(id, op, inverse, *q, if want_jac { Some(&mut *jac) } else { None })?;
            bound = Some(id);
        }
        Ok(())
    }

    fn run(&self, p: Point<T>, forward: bool, want_jac: bool) -> Result<(Point<T>, Mat2<T>), MapError> {
        let mut jac = Mat2::identity();
        let mut q = p;
        if forward {
            self.pass(&mut q, &mut jac, want_jac, true, false, false)?;
            if want_jac {
                let (q1, d) = self.base.eval_with_differential(q)?;
                jac = d * jac;
                q = q1;
            } else {
                q = self.base.eval(q)?;
            }
            self.pass(&mut q, &mut jac, want_jac, false, true, false)?;
        } else {
            self.pass(&mut q, &mut jac, want_jac, true, true, true)?;
            if want_jac {
                let (q1, d) = self.base.inverse_with_differential(q)?;
                jac = d * jac;
                q = q1;
            } else {
                q = self.base.eval_inverse(q)?;
            }
            self.pass(&mut q, &mut jac, want_jac, false, false, true)?;
        }
        Ok((q, jac))
    }
}

/// Searches small integer involutions `R` (entries in `[-2, 2]`, `det R = −1`) with
/// `R A R = A⁻¹`.
pub fn linear_reversor(a: &int::IMat) -> Option<int::IMat> {
    let inv = int::inverse_unimodular(a);
    const ORDER: [i64; 5] = [0, 1, -1, 2, -2];
    for p in ORDER {
        for q in ORDER {
            for r in ORDER {
                for s in ORDER {
                    let m = [[p, q], [r, s]];
                    if int::det(&m) == -1 && int::mul(&m, &m) == int::IDENTITY && int::mul(&int::mul(&m, a), &m) == inv {
                        return Some(m);
                    }
                }
            }
        }
    }
    None
}

/// Central-difference Jacobian of `f` at `p` with step `h`, refined by one Richardson
/// extrapolation (`(4 D(h/2) − D(h)) / 3`).
pub fn finite_difference<T: Scalar, F>(f: F, p: Point<T>, h: T) -> Result<Mat2<T>, MapError>
where
    F: Fn(Point<T>) -> Result<Point<T>, MapError>,
{
    let central = |h: T| -> Result<Mat2<T>, MapError> {
        let d = |v: Vec2<T>| -> Result<Vec2<T>, MapError> {
            let plus = f(p.offset(v))?;
            let minus = f(p.offset(-v))?;
            Ok(minus.delta_to(plus).scale(T::one() / (h + h)))
        };
        Ok(Mat2::from_columns(d(Vec2::new(h, T::zero()))?, d(Vec2::new(T::zero(), h))?))
    };
    let coarse = central(h)?;
    let fine = central(h * T::lit(0.5))?;
    Ok((fine.scale(T::lit(4.0)) - coarse).scale(T::one() / T::lit(3.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::Generator;
    use crate::torus::torus_distance;

    #[test]
    fn spec_examples() {
        let f = MapSpec::standard(1.0);
        assert_eq!(f.eval(Point::new(0.0, 0.0)).unwrap(), Point::new(0.0, 0.0));
        assert_eq!(f.differential(Point::origin()).unwrap(), Mat2::new(2.0, 1.0, 1.0, 1.0));
        let cat = MapSpec::<f64>::cat();
        assert_eq!(cat.eval(Point::new(0.5, 0.5)).unwrap(), Point::new(0.5, 0.0));
        assert_eq!(cat.eval_inverse(Point::new(0.5, 0.0)).unwrap(), Point::new(0.5, 0.5));
        let shear = MapSpec::standard(0.0);
        assert_eq!(shear.eval(Point::new(0.25, 0.5)).unwrap(), Point::new(0.75, 0.5));
        assert_eq!(shear.eval_inverse(Point::new(0.75, 0.5)).unwrap(), Point::new(0.25, 0.5));
        assert_eq!(shear.differential(Point::new(0.3, 0.9)).unwrap(), Mat2::new(1.0, 1.0, 0.0, 1.0));
        assert!(MapSpec::<f64>::linear_auto([[2, 0], [0, 1]]).is_err());
    }

    #[test]
    fn builtin_reversors_conjugate_to_inverse() {
        for f in [MapSpec::standard(1.3), MapSpec::cat(), MapSpec::linear_auto([[1, 1], [0, 1]]).unwrap(), MapSpec::Identity] {
            let r = f.builtin_reversor().unwrap();
            for i in 0..50 {
                let p = Point::new(0.137 * i as f64, 0.291 * i as f64 + 0.05);
                let lhs = r.apply(f.eval(p).unwrap());
                let rhs = f.eval_inverse(r.apply(p)).unwrap();
                assert!(torus_distance(lhs, rhs) < 1e-12, "{f:?}");
            }
        }
        assert_eq!(linear_reversor(&[[2, 1], [1, 1]]), Some([[1, 0], [-1, -1]]));
    }

    fn perturbed_example() -> (MapSpec<f64>, InvolutionSpec<f64>) {
        let f = MapSpec::standard(1.0);
        let r = InvolutionSpec::standard(1.0);
        let h1 = Bump::new(Point::new(0.3, 0.2), 0.01, 0.04, Generator::Push { v: Vec2::new(2e-3, -1e-3) }).unwrap();
        let h2 = Bump::new(Point::new(0.7, 0.6), 0.01, 0.04, Generator::Rotation { theta: 0.2 }).unwrap();
        let h3 = Bump::new(Point::new(0.2, 0.8), 0.01, 0.03, Generator::LinearGen { s: Mat2::new(0.1, 0.02, 0.02, -0.05) }).unwrap();
        let g = f
            .with_layer(Layer { placement: Placement::Pre, twin: true, bump: h1 }, Some(&r))
            .with_layer(Layer { placement: Placement::Post, twin: true, bump: h2 }, None)
            .with_layer(Layer { placement: Placement::Pre, twin: true, bump: h3 }, None);
        (g, r)
    }

    #[test]
    fn perturbed_inverse_reversibility_and_differential() {
        let (g, r) = perturbed_example();
        g.validate().unwrap();
        for i in 0..400 {
            let p = Point::new((i as f64 * 0.618_033_988_7).fract(), (i as f64 * 0.754_877_666).fract());
            let q = g.eval(p).unwrap();
            assert!(torus_distance(g.eval_inverse(q).unwrap(), p) < 1e-13);
            let lhs = r.apply(g.eval(r.apply(p)).unwrap());
            assert!(torus_distance(lhs, g.eval_inverse(p).unwrap()) < 1e-12);
            let d = g.differential(p).unwrap();
            assert!((d.det() - 1.0).abs() < 1e-10);
            let fd = finite_difference(|x| g.eval(x), p, 1e-6).unwrap();
            assert!(fd.approx_eq(&d, 1e-5), "{p:?}: {fd:?} vs {d:?}");
            let (_, dinv) = g.inverse_with_differential(q).unwrap();
            assert!((dinv * d).approx_eq(&Mat2::identity(), 1e-9));
        }
    }

    #[test]
    fn outside_supports_evaluation_is_bit_identical() {
        let (g, _) = perturbed_example();
        let f = MapSpec::standard(1.0);
        let p = Point::new(0.55, 0.05);
        assert_eq!(g.eval(p).unwrap(), f.eval(p).unwrap());
        assert_eq!(g.differential(p).unwrap(), f.differential(p).unwrap());
    }

    #[test]
    fn config_round_trip() {
        let (g, _) = perturbed_example();
        let text = toml::to_string(&g).unwrap();
        let back: MapSpec<f64> = toml::from_str(&text).unwrap();
        assert_eq!(back, g);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<MapSpec<f64>>(&json).unwrap(), g);
        assert!(toml::from_str::<MapSpec<f64>>("family = \"standard\"\nk = 1.0\nbogus = 2").is_err());
    }

    #[test]
    fn indexed_evaluation_matches_linear_scan() {
        let f = MapSpec::standard(0.9);
        let r = InvolutionSpec::standard(0.9);
        let mut layers = Vec::new();
        for i in 0..40 {
            let c = Point::new(0.05 + 0.37 * i as f64, 0.11 + 0.23 * i as f64);
            let generator = match i % 3 {
                0 => Generator::Push { v: Vec2::new(1e-3, -5e-4) },
                1 => Generator::Rotation { theta: 0.05 },
                _ => Generator::LinearGen { s: Mat2::new(0.02, 0.01, 0.01, -0.03) },
            };
            let placement = if i % 2 == 0 { Placement::Pre } else { Placement::Post };
            layers.push(Layer { placement, twin: i % 5 != 0, bump: Bump::new(c, 0.01, 0.03, generator).unwrap() });
        }
        let big = Perturbed::new(f.clone(), Some(r.clone()), layers.clone());
        for i in 0..2000 {
            let p = Point::new((i as f64 * 0.618_033_988_7).fract(), (i as f64 * 0.324_717_957).fract());
            // reference: compose layer by layer with short maps (each below the index threshold)
            let (fast, dfast) = big.run(p, true, true).unwrap();
            let mut q = p;
            let mut d = Mat2::identity();
            for id in (0..layers.len()).rev() {
                if let Some(op) = big.inner(id) {
                    q = big.apply(id, op, false, q, Some(&mut d)).unwrap();
                }
            }
            let (q1, d1) = f.eval_with_differential(q).unwrap();
            q = q1;
            d = d1 * d;
            for id in 0..layers.len() {
                if let Some(op) = big.outer(id) {
                    q = big.apply(id, op, false, q, Some(&mut d)).unwrap();
                }
            }
            assert_eq!((fast, dfast), (q, d));
            let back = big.run(fast, false, false).unwrap().0;
            assert!(torus_distance(back, p) < 1e-12);
        }
    }

    #[test]
    fn generic_over_f32() {
        let f = MapSpec::<f32>::standard(1.0);
        let p = Point::new(0.3f32, 0.2);
        let q = f.eval(p).unwrap();
        assert!(torus_distance(f.eval_inverse(q).unwrap(), p) < 1e-6);
    }
}
