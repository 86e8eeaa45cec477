//! Fuchsian surfaces from the regular 4g-gon, perturbed polygons, and cyclic covers.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::mobius::{disk_distance, Mobius};

/// Word in the generators: letter `k+1` is generator k, `-(k+1)` its inverse.
/// The word `[x, y]` denotes x∘y.
pub type Word = Vec<i32>;

pub fn eval_word(gens: &[Mobius], word: &[i32]) -> Mobius {
    word.iter().fold(Mobius::IDENTITY, |acc, &l| {
        acc.compose(&letter(gens, l))
    })
}

fn letter(gens: &[Mobius], l: i32) -> Mobius {
    let g = gens[(l.unsigned_abs() - 1) as usize];
    if l > 0 {
        g
    } else {
        g.inverse()
    }
}

pub fn invert_word(word: &[i32]) -> Word {
    word.iter().rev().map(|l| -l).collect()
}

/// Concatenates and freely reduces.
pub fn concat_words(a: &[i32], b: &[i32]) -> Word {
    let mut out: Word = a.to_vec();
    for &l in b {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Pairing {
    pub side: usize,
    pub partner: usize,
    /// Maps side `side` onto side `partner`, reversing orientation along the boundary.
    pub transform: Mobius,
    pub word: Word,
}

#[derive(Clone, Debug)]
pub struct FuchsianSurface {
    pub genus: usize,
    /// a₁, b₁, …, a_g, b_g.
    pub generators: Vec<Mobius>,
    pub polygon: Vec<C64>,
    pub pairings: Vec<Pairing>,
}

/// Euclidean circumradius of the regular N-gon with interior angle 2π/N, by bisection.
pub fn regular_circumradius(n: usize) -> f64 {
    let target = 2.0 * PI / n as f64;
    let angle_at = |r: f64| {
        let v0 = C64::from_polar(r, PI / n as f64);
        let vm = C64::from_polar(r, -PI / n as f64);
        let v1 = C64::from_polar(r, 3.0 * PI / n as f64);
        interior_angle(vm, v0, v1)
    };
    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // the angle shrinks as the polygon grows
        if angle_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Interior angle at `v` of the geodesic polygon with neighbours `prev` and `next`
/// (counterclockwise order).
pub fn interior_angle(prev: C64, v: C64, next: C64) -> f64 {
    let t = Mobius::translation_to(v).inverse();
    let a = t.apply(prev).arg();
    let b = t.apply(next).arg();
    let mut d = a - b;
    while d <= 0.0 {
        d += 2.0 * PI;
    }
    while d > 2.0 * PI {
        d -= 2.0 * PI;
    }
    d
}

impl FuchsianSurface {
    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.genus as i64
    }

    /// Gauss–Bonnet area −2πχ.
    pub fn area(&self) -> f64 {
        -2.0 * PI * self.euler_characteristic() as f64
    }

    pub fn relator_word(&self) -> Word {
        let mut w = Word::new();
        for j in 0..self.genus {
            let a = (2 * j + 1) as i32;
            let b = (2 * j + 2) as i32;
            w.extend([a, b, -a, -b]);
        }
        w
    }

    /// Deviation of [a₁,b₁]⋯[a_g,b_g] from ±identity.
    pub fn relator_deviation(&self) -> f64 {
        eval_word(&self.generators, &self.relator_word()).deviation_from_identity()
    }

    pub fn angle_sum(&self) -> f64 {
        polygon_angle_sum(&self.polygon)
    }

    /// Worst endpoint mismatch of the side pairings.
    pub fn pairing_error(&self) -> f64 {
        let n = self.polygon.len();
        let mut worst: f64 = 0.0;
        for p in &self.pairings {
            let (s0, s1) = (self.polygon[p.side], self.polygon[(p.side + 1) % n]);
            let (t0, t1) = (self.polygon[p.partner], self.polygon[(p.partner + 1) % n]);
            worst = worst.max((p.transform.apply(s0) - t1).norm());
            worst = worst.max((p.transform.apply(s1) - t0).norm());
        }
        worst
    }

    pub fn pairing_for_side(&self, side: usize) -> &Pairing {
        self.pairings
            .iter()
            .find(|p| p.side == side)
            .expect("every side is paired")
    }
}

pub fn polygon_angle_sum(poly: &[C64]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|k| interior_angle(poly[(k + n - 1) % n], poly[k], poly[(k + 1) % n]))
        .sum()
}

/// Surface from a 4g-gon whose paired sides have equal length and angle sum 2π.
/// Side 4j+2 is glued to side 4j by aⱼ and side 4j+1 to side 4j+3 by bⱼ.
pub fn surface_from_polygon(genus: usize, polygon: Vec<C64>) -> FuchsianSurface {
    let n = polygon.len();
    let v = |k: usize| polygon[k % n];
    let side_map = |s: usize, t: usize| Mobius::from_point_pairs(v(s), v(s + 1), v(t + 1), v(t));
    let mut generators = Vec::with_capacity(2 * genus);
    let mut pairings = Vec::with_capacity(n);
    for j in 0..genus {
        let a = side_map(4 * j + 2, 4 * j);
        let b = side_map(4 * j + 1, 4 * j + 3);
        generators.push(a);
        generators.push(b);
        let (la, lb) = ((2 * j + 1) as i32, (2 * j + 2) as i32);
        pairings.push(Pairing { side: 4 * j + 2, partner: 4 * j, transform: a, word: vec![la] });
        pairings.push(Pairing { side: 4 * j, partner: 4 * j + 2, transform: a.inverse(), word: vec![-la] });
        pairings.push(Pairing { side: 4 * j + 1, partner: 4 * j + 3, transform: b, word: vec![lb] });
        pairings.push(Pairing { side: 4 * j + 3, partner: 4 * j + 1, transform: b.inverse(), word: vec![-lb] });
    }
    pairings.sort_by_key(|p| p.side);
    FuchsianSurface { genus, generators, polygon, pairings }
}

/// Regular 4g-gon surface with the standard side pairings.
pub fn build_surface(genus: usize) -> Result<FuchsianSurface> {
    if genus < 2 {
        return Err(LabError::InvalidArgument(format!("genus must be at least 2, got {genus}")));
    }
    let n = 4 * genus;
    let r = regular_circumradius(n);
    let polygon = (0..n)
        .map(|k| C64::from_polar(r, PI * (2 * k + 1) as f64 / n as f64))
        .collect();
    Ok(surface_from_polygon(genus, polygon))
}

fn polygon_constraints(genus: usize, poly: &[C64]) -> Vec<f64> {
    let n = poly.len();
    let side = |k: usize| disk_distance(poly[k % n], poly[(k + 1) % n]);
    let mut c = Vec::with_capacity(2 * genus + 1);
    for j in 0..genus {
        c.push(side(4 * j) - side(4 * j + 2));
        c.push(side(4 * j + 1) - side(4 * j + 3));
    }
    c.push(polygon_angle_sum(poly) - 2.0 * PI);
    c
}

/// Randomly perturbed 4g-gon projected back onto the gluing constraints by
/// minimum-norm Gauss–Newton; yields a different point of Teichmüller space.
pub fn build_perturbed_surface<R: Rng>(genus: usize, amplitude: f64, rng: &mut R) -> Result<FuchsianSurface> {
    let base = build_surface(genus)?;
    let n = base.polygon.len();
    let mut x: Vec<f64> = base
        .polygon
        .iter()
        .flat_map(|z| {
            let dz = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amplitude;
            [z.re + dz.re, z.im + dz.im]
        })
        .collect();
    let to_poly = |x: &[f64]| (0..n).map(|k| C64::new(x[2 * k], x[2 * k + 1])).collect::<Vec<_>>();
    for _ in 0..50 {
        let c = polygon_constraints(genus, &to_poly(&x));
        let norm = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm < 1e-14 {
            break;
        }
        let m = c.len();
        let mut jac = DMatrix::<f64>::zeros(m, 2 * n);
        let h = 1e-7;
        for i in 0..2 * n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let cp = polygon_constraints(genus, &to_poly(&xp));
            let cm = polygon_constraints(genus, &to_poly(&xm));
            for r in 0..m {
                jac[(r, i)] = (cp[r] - cm[r]) / (2.0 * h);
            }
        }
        let jjt = &jac * jac.transpose();
        let rhs = DVector::from_vec(c);
        let y = jjt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| LabError::InvalidArgument("singular polygon constraint system".into()))?;
        let step = jac.transpose() * y;
        for i in 0..2 * n {
            x[i] -= step[i];
        }
    }
    let poly = to_poly(&x);
    let c = polygon_constraints(genus, &poly);
    if c.iter().any(|v| v.abs() > 1e-11) || poly.iter().any(|z| z.norm() >= 1.0) {
        return Err(LabError::InvalidArgument("perturbed polygon did not close up".into()));
    }
    Ok(surface_from_polygon(genus, poly))
}

/// Group element together with a word that produces it.
#[derive(Clone, Debug)]
pub struct GroupElement {
    pub word: Word,
    pub transform: Mobius,
}

/// All distinct elements of word length ≤ `max_len`, shortest words first.
/// Duplicates are detected by matrix proximity (1e−9 relative).
pub fn enumerate_elements(gens: &[Mobius], max_len: usize) -> Vec<GroupElement> {
    let mut out = vec![GroupElement { word: Word::new(), transform: Mobius::IDENTITY }];
    let mut index = ElementIndex::default();
    index.insert(&Mobius::IDENTITY, 0);
    let letters: Vec<i32> = (1..=gens.len() as i32).flat_map(|k| [k, -k]).collect();
    let mut frontier = vec![0usize];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for &i in &frontier {
            let last = out[i].word.last().copied();
            for &l in &letters {
                if last == Some(-l) {
                    continue;
                }
                let t = out[i].transform.compose(&letter(gens, l));
                if index.find(&t, &out).is_some() {
                    continue;
                }
                let mut word = out[i].word.clone();
                word.push(l);
                index.insert(&t, out.len());
                next.push(out.len());
                out.push(GroupElement { word, transform: t });
            }
        }
        frontier = next;
    }
    out
}

/// Hash index of Möbius transforms on a relative grid, with neighbour-cell lookups.
#[derive(Default)]
pub struct ElementIndex {
    cells: HashMap<[i64; 4], Vec<usize>>,
}

const CELL: f64 = 1e-6;

fn coords(m: &Mobius) -> [f64; 4] {
    let c = m.canonical();
    let s = c.alpha.norm();
    [c.alpha.re / s, c.alpha.im / s, c.beta.re / s, c.beta.im / s]
}

impl ElementIndex {
    pub fn insert(&mut self, m: &Mobius, id: usize) {
        let x = coords(m);
        let key = x.map(|v| (v / CELL).floor() as i64);
        self.cells.entry(key).or_default().push(id);
    }

    pub fn find(&self, m: &Mobius, store: &[GroupElement]) -> Option<usize> {
        self.find_by(m, |id| store[id].transform)
    }

    pub fn find_by<F: Fn(usize) -> Mobius>(&self, m: &Mobius, get: F) -> Option<usize> {
        let x = coords(m);
        let base = x.map(|v| (v / CELL).floor() as i64);
        let near = x.map(|v| {
            let f = v / CELL - (v / CELL).floor();
            if f < 0.5 { -1 } else { 1 }
        });
        let tol = 1e-9 * m.alpha.norm();
        for mask in 0..16u32 {
            let mut key = base;
            for d in 0..4 {
                if mask & (1 << d) != 0 {
                    key[d] += near[d];
                }
            }
            if let Some(ids) = self.cells.get(&key) {
                for &id in ids {
                    if get(id).distance(m) <= tol {
                        return Some(id);
                    }
                }
            }
        }
        None
    }
}

/// Cyclic Z/d cover determined by a homomorphism of the base group onto Z/d.
#[derive(Clone, Debug)]
pub struct CyclicCover {
    pub base: FuchsianSurface,
    pub degree: usize,
    /// Image of each base generator in Z/d.
    pub hom: Vec<usize>,
    /// Coset representatives c_k with hom(c_k) = k.
    pub transversal: Vec<GroupElement>,
    /// Schreier generators of the kernel subgroup (the cover group).
    pub subgroup_generators: Vec<GroupElement>,
    /// The cover as a surface: kernel generators and the d tiles c_k(P) as polygon.
    pub surface: FuchsianSurface,
}

impl CyclicCover {
    pub fn hom_of_word(&self, word: &[i32]) -> usize {
        word_hom(&self.hom, self.degree, word)
    }

    pub fn genus(&self) -> usize {
        self.surface.genus
    }
}

pub fn word_hom(hom: &[usize], d: usize, word: &[i32]) -> usize {
    let mut s: i64 = 0;
    for &l in word {
        let h = hom[(l.unsigned_abs() - 1) as usize] as i64;
        s += if l > 0 { h } else { -h };
    }
    s.rem_euclid(d as i64) as usize
}

/// Builds the Z/d cover; φ is the inclusion of the kernel into the base group.
pub fn build_cyclic_cover(base: &FuchsianSurface, hom: &[usize], d: usize) -> Result<CyclicCover> {
    let n_gen = base.generators.len();
    if hom.len() != n_gen {
        return Err(LabError::InvalidArgument(format!(
            "homomorphism needs {n_gen} generator images, got {}",
            hom.len()
        )));
    }
    if d == 0 {
        return Err(LabError::InvalidArgument("cover degree must be positive".into()));
    }
    let hom: Vec<usize> = hom.iter().map(|h| h % d).collect();
    // transversal words by breadth-first search over Z/d
    let mut transversal: Vec<Option<Word>> = vec![None; d];
    transversal[0] = Some(Word::new());
    let mut queue = vec![0usize];
    while let Some(k) = queue.pop() {
        let w = transversal[k].clone().unwrap();
        for (g, &h) in hom.iter().enumerate() {
            for (l, step) in [((g + 1) as i32, h), (-((g + 1) as i32), (d - h) % d)] {
                let k2 = (k + step) % d;
                if transversal[k2].is_none() {
                    transversal[k2] = Some(concat_words(&w, &[l]));
                    queue.insert(0, k2);
                }
            }
        }
    }
    if transversal.iter().any(|t| t.is_none()) {
        return Err(LabError::InvalidArgument(
            "homomorphism is not surjective onto Z/d; the cover would be disconnected".into(),
        ));
    }
    let transversal: Vec<GroupElement> = transversal
        .into_iter()
        .map(|w| {
            let w = w.unwrap();
            GroupElement { transform: eval_word(&base.generators, &w), word: w }
        })
        .collect();
    let mut subgroup_generators = Vec::new();
    for (k, t) in transversal.iter().enumerate() {
        for g in 0..n_gen {
            let l = (g + 1) as i32;
            let k2 = (k + hom[g]) % d;
            let w = concat_words(&concat_words(&t.word, &[l]), &invert_word(&transversal[k2].word));
            if w.is_empty() {
                continue;
            }
            subgroup_generators.push(GroupElement { transform: eval_word(&base.generators, &w), word: w });
        }
    }
    let genus = d * (base.genus - 1) + 1;
    let polygon = transversal
        .iter()
        .flat_map(|t| base.polygon.iter().map(move |&z| t.transform.apply(z)))
        .collect();
    let surface = FuchsianSurface {
        genus,
        generators: subgroup_generators.iter().map(|e| e.transform).collect(),
        polygon,
        pairings: Vec::new(),
    };
    Ok(CyclicCover { base: base.clone(), degree: d, hom, transversal, subgroup_generators, surface })
}

/// Number of cosets of the cover group met by base words of length ≤ `word_len`.
/// Membership in the cover group is tested against products of at most
/// `word_len + 1` subgroup generators, so the count never consults the homomorphism.
pub fn coset_count_by_enumeration(cover: &CyclicCover, word_len: usize) -> usize {
    let sub: Vec<Mobius> = cover.subgroup_generators.iter().map(|e| e.transform).collect();
    let members = enumerate_elements(&sub, word_len + 1);
    let mut index = ElementIndex::default();
    for (i, e) in members.iter().enumerate() {
        index.insert(&e.transform, i);
    }
    let words = enumerate_elements(&cover.base.generators, word_len);
    let mut reps: Vec<Mobius> = Vec::new();
    for w in &words {
        let known = reps.iter().any(|r| {
            let x = r.inverse().compose(&w.transform);
            index.find(&x, &members).is_some()
        });
        if !known {
            reps.push(w.transform);
        }
    }
    reps.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_small_genus() {
        assert!(matches!(build_surface(1), Err(LabError::InvalidArgument(_))));
    }

    #[test]
    fn circumradius_matches_closed_form() {
        for g in 2..5 {
            let n = 4 * g;
            let cosh_r = 1.0 / (PI / n as f64).tan().powi(2);
            let closed = (cosh_r.acosh() / 2.0).tanh();
            assert!((regular_circumradius(n) - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn genus_two_invariants() {
        let s = build_surface(2).unwrap();
        assert!(s.relator_deviation() < 1e-9);
        assert!((s.angle_sum() - 2.0 * PI).abs() < 1e-9);
        assert!(s.pairing_error() < 1e-9);
        assert_eq!(s.pairings.len(), 8);
    }

    #[test]
    fn genus_three_invariants() {
        let s = build_surface(3).unwrap();
        assert!(s.relator_deviation() < 1e-9);
        assert!((s.angle_sum() - 2.0 * PI).abs() < 1e-9);
        assert!(s.pairing_error() < 1e-9);
    }

    #[test]
    fn perturbed_polygon_still_closes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = build_perturbed_surface(2, 0.03, &mut rng).unwrap();
        assert!(s.relator_deviation() < 1e-9);
        assert!((s.angle_sum() - 2.0 * PI).abs() < 1e-9);
        assert!(s.pairing_error() < 1e-9);
        let reg = build_surface(2).unwrap();
        let moved = s.polygon.iter().zip(&reg.polygon).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(moved > 1e-3);
    }

    #[test]
    fn element_counts_grow_like_free_reduction() {
        let s = build_surface(2).unwrap();
        let e = enumerate_elements(&s.generators, 2);
        // 1 + 8 + 8·7 reduced words, none coincide at length ≤ 2
        assert_eq!(e.len(), 65);
        for el in &e {
            assert!(eval_word(&s.generators, &el.word).distance(&el.transform) < 1e-9);
        }
    }

    #[test]
    fn degree_one_cover_is_base() {
        let s = build_surface(2).unwrap();
        let c = build_cyclic_cover(&s, &[0, 0, 0, 0], 1).unwrap();
        assert_eq!(c.degree, 1);
        assert_eq!(c.genus(), 2);
        assert_eq!(c.subgroup_generators.len(), 4);
        for (e, g) in c.subgroup_generators.iter().zip(&s.generators) {
            assert!(e.transform.distance(g) < 1e-12);
        }
    }

    #[test]
    fn double_cover_has_genus_three_and_index_two() {
        let s = build_surface(2).unwrap();
        let c = build_cyclic_cover(&s, &[1, 0, 0, 0], 2).unwrap();
        assert_eq!(c.degree, 2);
        assert_eq!(c.genus(), 3);
        assert_eq!(c.surface.euler_characteristic(), 2 * s.euler_characteristic());
        for e in &c.subgroup_generators {
            assert_eq!(c.hom_of_word(&e.word), 0);
        }
        assert_eq!(coset_count_by_enumeration(&c, 3), 2);
    }

    #[test]
    fn non_surjective_hom_is_rejected() {
        let s = build_surface(2).unwrap();
        assert!(build_cyclic_cover(&s, &[2, 0, 2, 0], 4).is_err());
    }
}
