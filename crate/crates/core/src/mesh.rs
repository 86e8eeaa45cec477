//! Triangulated fundamental domains with equivariant vertex identifications.
//!
//! Vertices are stored as *slots*: chart positions inside the polygon (one per
//! occurrence). Slots that are deck translates of each other form an *orbit*, which
//! carries the single stored unknown of any field. Faces touching the polygon boundary
//! integrate over the exact geodesic arc, so the faces tile the fundamental polygon.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::mobius::{conformal_factor, geodesic_point, geodesic_point_and_tangent, Mobius};
use crate::quadrature;
use crate::surface::{
    build_cyclic_cover, concat_words, eval_word, surface_from_polygon, word_hom, CyclicCover,
    FuchsianSurface, Word,
};

/// Quadrature data of one face in its chart. Hat functions are affine on straight faces;
/// on faces with a geodesic edge they are pulled back from the reference triangle through
/// the blending map, so that traces along the arc are linear in hyperbolic arclength.
#[derive(Clone, Debug)]
pub struct FaceGeometry {
    pub nodes: [C64; quadrature::N],
    /// Chart area weights (Jacobian included).
    pub weights: [f64; quadrature::N],
    /// Hat function values at the nodes.
    pub bary: [[f64; 3]; quadrature::N],
    /// ∂_z of the hat functions at the nodes.
    pub grad: [[C64; 3]; quadrature::N],
    /// Image of the reference centroid, where every hat equals 1/3.
    pub centroid: C64,
    pub centroid_grad: [C64; 3],
    /// Chart area of the (possibly curved) face.
    pub area: f64,
    /// Corners (apex, arc start, arc end) when one edge follows a geodesic.
    pub arc: Option<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Label {
    Interior,
    Corner(usize),
    /// Point at hyperbolic fraction `num / 2^level` along side `side`.
    Side { side: usize, num: u64 },
}

#[derive(Clone, Debug)]
pub struct TriangulatedDomain {
    /// Genus of the surface this complex triangulates.
    pub genus: usize,
    pub sheets: usize,
    pub refinement_level: usize,
    /// Slot chart coordinates (sheet charts share coordinates).
    pub vertices: Vec<C64>,
    /// Counterclockwise slot triples.
    pub faces: Vec<[usize; 3]>,
    pub face_sheet: Vec<usize>,
    /// Curved edge of each face: (edge index, polygon side).
    pub face_boundary: Vec<Option<(usize, usize)>>,
    pub geometry: Vec<FaceGeometry>,
    pub slot_orbit: Vec<usize>,
    /// Base-group word γ with γ(representative) = slot in sheet-normalized charts.
    pub slot_word: Vec<Word>,
    pub slot_deck: Vec<Mobius>,
    pub orbit_rep: Vec<usize>,
    /// Base surface whose polygon and generators define the charts.
    pub base: FuchsianSurface,
    /// Cover homomorphism when `sheets > 1`.
    pub hom: Vec<usize>,
    labels: Vec<Label>,
}

/// Straight triangle data for a corner triple.
fn straight_grad(z: [C64; 3]) -> ([C64; 3], f64) {
    let area2 = ((z[1] - z[0]).conj() * (z[2] - z[0])).im;
    let mut g = [C64::new(0.0, 0.0); 3];
    for k in 0..3 {
        // ∇φ_k = J(z_{k+2} − z_{k+1}) / (2A) rotated; ∂_z = (∂_x − i∂_y)/2
        let e = z[(k + 2) % 3] - z[(k + 1) % 3];
        let grad = C64::new(-e.im, e.re) / area2; // (φ_x, φ_y) as complex
        g[k] = grad.conj() * 0.5;
    }
    (g, 0.5 * area2)
}

/// Quadrature nodes for a face whose edge `edge` (corner e → e+1) follows a geodesic.
pub fn face_geometry(z: [C64; 3], curved_edge: Option<usize>) -> FaceGeometry {
    let (grad, straight_area) = straight_grad(z);
    let mut nodes = [C64::new(0.0, 0.0); quadrature::N];
    let mut weights = [0.0; quadrature::N];
    let mut bary = [[0.0; 3]; quadrature::N];
    let mut node_grad = [grad; quadrature::N];
    let mut centroid = (z[0] + z[1] + z[2]) / 3.0;
    let mut centroid_grad = grad;
    match curved_edge {
        None => {
            for q in 0..quadrature::N {
                let l = quadrature::NODES[q];
                nodes[q] = z[0] * l[0] + z[1] * l[1] + z[2] * l[2];
                weights[q] = quadrature::WEIGHTS[q] * straight_area;
                bary[q] = l;
            }
        }
        Some(e) => {
            let (ia, ib, ic) = ((e + 2) % 3, e, (e + 1) % 3);
            for q in 0..quadrature::N {
                let l = quadrature::NODES[q];
                let (p, jac, g) = blended_point(z, ia, ib, ic, l[1], l[2]);
                nodes[q] = p;
                weights[q] = quadrature::WEIGHTS[q] * 0.5 * jac;
                bary[q][ia] = l[0];
                bary[q][ib] = l[1];
                bary[q][ic] = l[2];
                node_grad[q] = g;
            }
            let (p, _, g) = blended_point(z, ia, ib, ic, 1.0 / 3.0, 1.0 / 3.0);
            centroid = p;
            centroid_grad = g;
        }
    }
    let area = weights.iter().sum();
    FaceGeometry {
        nodes,
        weights,
        bary,
        grad: node_grad,
        centroid,
        centroid_grad,
        area,
        arc: curved_edge.map(|e| [(e + 2) % 3, e, (e + 1) % 3]),
    }
}

/// Blends the opposite corner a = z[ia] with the geodesic arc from b = z[ib] to c = z[ic]
/// at reference coordinates (l1, l2). Returns the point, the Jacobian and ∂_z of the hats.
fn blended_point(z: [C64; 3], ia: usize, ib: usize, ic: usize, l1: f64, l2: f64) -> (C64, f64, [C64; 3]) {
    let (a, b, c) = (z[ia], z[ib], z[ic]);
    let sigma = l1 + l2;
    let tau = l2 / sigma;
    let (arc, darc) = geodesic_point_and_tangent(b, c, tau);
    let chord = b * (1.0 - tau) + c * tau;
    let dev = arc - chord;
    let ddev = darc - (c - b);
    let p = a + (b - a) * l1 + (c - a) * l2 + dev * sigma;
    let d1 = (b - a) + dev - ddev * tau;
    let d2 = (c - a) + dev + ddev * (1.0 - tau);
    let jac = (d1.conj() * d2).im;
    // dz = d1 dl1 + d2 dl2 inverted for ∂_z l1, ∂_z l2
    let det = d1 * d2.conj() - d2 * d1.conj();
    let g1 = d2.conj() / det;
    let g2 = -d1.conj() / det;
    let mut g = [C64::new(0.0, 0.0); 3];
    g[ib] = g1;
    g[ic] = g2;
    g[ia] = -(g1 + g2);
    (p, jac, g)
}

struct Builder {
    positions: Vec<C64>,
    labels: Vec<Label>,
    faces: Vec<[usize; 3]>,
    boundary: Vec<Option<(usize, usize)>>,
}

/// Fan triangulation of the polygon with `level` rounds of 1→4 refinement.
pub fn triangulate(surface: &FuchsianSurface, level: usize) -> Result<TriangulatedDomain> {
    let n = surface.polygon.len();
    let mut b = Builder {
        positions: vec![C64::new(0.0, 0.0)],
        labels: vec![Label::Interior],
        faces: Vec::new(),
        boundary: Vec::new(),
    };
    for (k, &v) in surface.polygon.iter().enumerate() {
        b.positions.push(v);
        b.labels.push(Label::Corner(k));
    }
    for k in 0..n {
        b.faces.push([0, k + 1, (k + 1) % n + 1]);
        b.boundary.push(Some((1, k)));
    }
    for lev in 0..level {
        refine(&mut b, surface, lev);
    }
    let geometry: Vec<FaceGeometry> = b
        .faces
        .iter()
        .zip(&b.boundary)
        .map(|(f, bd)| face_geometry(f.map(|i| b.positions[i]), bd.map(|(e, _)| e)))
        .collect();
    for (i, g) in geometry.iter().enumerate() {
        if !(g.area > 0.0) || g.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(LabError::Mesh(format!("face {i} is degenerate or inverted")));
        }
    }
    let (slot_orbit, slot_word, orbit_rep) = identify(&b, surface, level)?;
    let slot_deck = slot_word.iter().map(|w| eval_word(&surface.generators, w)).collect();
    let nf = b.faces.len();
    Ok(TriangulatedDomain {
        genus: surface.genus,
        sheets: 1,
        refinement_level: level,
        vertices: b.positions,
        faces: b.faces,
        face_sheet: vec![0; nf],
        face_boundary: b.boundary,
        geometry,
        slot_orbit,
        slot_word,
        slot_deck,
        orbit_rep,
        base: surface.clone(),
        hom: vec![0; surface.generators.len()],
        labels: b.labels,
    })
}

fn side_fraction(label: Label, side: usize, n: usize, level: usize) -> f64 {
    match label {
        Label::Corner(k) if k == side => 0.0,
        Label::Corner(k) if k == (side + 1) % n => 1.0,
        Label::Side { side: s, num } if s == side => num as f64 / (1u64 << level) as f64,
        _ => panic!("vertex is not on side {side}"),
    }
}

fn refine(b: &mut Builder, surface: &FuchsianSurface, level: usize) {
    let n = surface.polygon.len();
    for l in b.labels.iter_mut() {
        if let Label::Side { num, .. } = l {
            *num *= 2;
        }
    }
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces = Vec::with_capacity(4 * b.faces.len());
    let mut boundary = Vec::with_capacity(4 * b.faces.len());
    let old_faces = std::mem::take(&mut b.faces);
    let old_boundary = std::mem::take(&mut b.boundary);
    for (f, bd) in old_faces.iter().zip(&old_boundary) {
        let mut m = [0usize; 3];
        for e in 0..3 {
            let (p, q) = (f[e], f[(e + 1) % 3]);
            let key = (p.min(q), p.max(q));
            let id = *mids.entry(key).or_insert_with(|| {
                let (pos, label) = match bd {
                    Some((be, side)) if *be == e => {
                        let tp = side_fraction(b.labels[p], *side, n, level + 1);
                        let tq = side_fraction(b.labels[q], *side, n, level + 1);
                        let tau = 0.5 * (tp + tq);
                        let pos = geodesic_point(surface.polygon[*side], surface.polygon[(*side + 1) % n], tau);
                        let num = (tau * (1u64 << (level + 1)) as f64).round() as u64;
                        (pos, Label::Side { side: *side, num })
                    }
                    _ => (0.5 * (b.positions[p] + b.positions[q]), Label::Interior),
                };
                b.positions.push(pos);
                b.labels.push(label);
                b.positions.len() - 1
            });
            m[e] = id;
        }
        let [a, bb, c] = *f;
        let [ab, bc, ca] = m;
        let children = [[a, ab, ca], [ab, bb, bc], [ca, bc, c], [ab, bc, ca]];
        let child_boundary: [Option<(usize, usize)>; 4] = match bd {
            None => [None; 4],
            Some((0, s)) => [Some((0, *s)), Some((0, *s)), None, None],
            Some((1, s)) => [None, Some((1, *s)), Some((1, *s)), None],
            Some((_, s)) => [Some((2, *s)), None, Some((2, *s)), None],
        };
        faces.extend(children);
        boundary.extend(child_boundary);
    }
    b.faces = faces;
    b.boundary = boundary;
}

/// Orbit identification: interior points are their own orbit; a point on the image side
/// of a generator is the generator applied to the matching point of its source side;
/// all corners form one orbit.
fn identify(b: &Builder, surface: &FuchsianSurface, level: usize) -> Result<(Vec<usize>, Vec<Word>, Vec<usize>)> {
    let n = surface.polygon.len();
    let denom = 1u64 << level;
    let ns = b.positions.len();
    let mut orbit = vec![usize::MAX; ns];
    let mut words: Vec<Word> = vec![Word::new(); ns];
    let mut reps = Vec::new();
    // source side of each generator: side 4j+2 for aⱼ, 4j+1 for bⱼ
    let mut side_lookup: HashMap<(usize, u64), usize> = HashMap::new();
    let mut corner_slot = vec![0usize; n];
    for (i, l) in b.labels.iter().enumerate() {
        match *l {
            Label::Side { side, num } => {
                side_lookup.insert((side, num), i);
            }
            Label::Corner(k) => corner_slot[k] = i,
            Label::Interior => {}
        }
    }
    let is_source = |s: usize| s % 4 == 1 || s % 4 == 2;
    for i in 0..ns {
        match b.labels[i] {
            Label::Interior => {
                orbit[i] = reps.len();
                reps.push(i);
            }
            Label::Side { side, .. } if is_source(side) => {
                orbit[i] = reps.len();
                reps.push(i);
            }
            _ => {}
        }
    }
    for i in 0..ns {
        if let Label::Side { side, num } = b.labels[i] {
            if is_source(side) {
                continue;
            }
            // image side: find the pairing whose partner is this side
            let p = surface
                .pairings
                .iter()
                .find(|p| p.partner == side && is_source(p.side))
                .ok_or_else(|| LabError::Mesh(format!("side {side} has no source pairing")))?;
            let src = *side_lookup
                .get(&(p.side, denom - num))
                .ok_or_else(|| LabError::Mesh(format!("no partner for point {num} on side {side}")))?;
            orbit[i] = orbit[src];
            words[i] = p.word.clone();
        }
    }
    // corners: breadth-first over the pairings starting at corner 0
    let corner_orbit = reps.len();
    reps.push(corner_slot[0]);
    let mut corner_word: Vec<Option<Word>> = vec![None; n];
    corner_word[0] = Some(Word::new());
    let mut queue = vec![0usize];
    while let Some(k) = queue.pop() {
        let w = corner_word[k].clone().unwrap();
        for p in &surface.pairings {
            // p maps v_side → v_{partner+1} and v_{side+1} → v_partner
            let targets = [(p.side, (p.partner + 1) % n), ((p.side + 1) % n, p.partner)];
            for (from, to) in targets {
                if from == k && corner_word[to].is_none() {
                    corner_word[to] = Some(concat_words(&p.word, &w));
                    queue.push(to);
                }
            }
        }
    }
    for k in 0..n {
        let s = corner_slot[k];
        orbit[s] = corner_orbit;
        words[s] = corner_word[k]
            .clone()
            .ok_or_else(|| LabError::Mesh(format!("corner {k} is not in the vertex cycle")))?;
    }
    Ok((orbit, words, reps))
}

impl TriangulatedDomain {
    pub fn num_orbits(&self) -> usize {
        self.orbit_rep.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.genus as i64
    }

    /// Chart position of an orbit's representative.
    pub fn orbit_position(&self, o: usize) -> C64 {
        self.vertices[self.orbit_rep[o]]
    }

    /// Orbits of vertices that sit on the polygon boundary, each with
    /// (slot, transform from representative to slot) for every occurrence.
    pub fn boundary_orbits(&self) -> Vec<(usize, Vec<(usize, Mobius)>)> {
        let mut by_orbit: HashMap<usize, Vec<(usize, Mobius)>> = HashMap::new();
        for (s, l) in self.labels.iter().enumerate() {
            if *l != Label::Interior {
                by_orbit.entry(self.slot_orbit[s]).or_default().push((s, self.slot_deck[s]));
            }
        }
        let mut v: Vec<_> = by_orbit.into_iter().collect();
        v.sort_by_key(|(o, _)| *o);
        v
    }

    /// V − E + F of the identified complex. Edges are identified by the orbits of their
    /// endpoints together with the relative deck transform between the two occurrences.
    pub fn euler_count(&self) -> i64 {
        let mut edges: HashMap<(usize, usize, [i64; 4]), ()> = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                let (mut p, mut q) = (f[e], f[(e + 1) % 3]);
                if self.slot_orbit[p] > self.slot_orbit[q]
                    || (self.slot_orbit[p] == self.slot_orbit[q] && p > q)
                {
                    std::mem::swap(&mut p, &mut q);
                }
                let key_of = |m: Mobius| {
                    let c = m.canonical();
                    [c.alpha.re, c.alpha.im, c.beta.re, c.beta.im].map(|x| (x * 1e6).round() as i64)
                };
                let rel = self.slot_deck[p].inverse().compose(&self.slot_deck[q]);
                let mut key = key_of(rel);
                if self.slot_orbit[p] == self.slot_orbit[q] {
                    // an edge joining an orbit to itself may appear with either orientation
                    key = key.min(key_of(rel.inverse()));
                }
                edges.insert((self.slot_orbit[p], self.slot_orbit[q], key), ());
            }
        }
        self.num_orbits() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// ∫ λ² dA over the fundamental domain by per-face quadrature.
    pub fn hyperbolic_area(&self) -> f64 {
        self.geometry
            .iter()
            .map(|g| (0..quadrature::N).map(|q| g.weights[q] * conformal_factor(g.nodes[q])).sum::<f64>())
            .sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for f in &self.faces {
            for e in 0..3 {
                m = m.max((self.vertices[f[e]] - self.vertices[f[(e + 1) % 3]]).norm());
            }
        }
        m
    }

    /// Hyperbolic lumped mass per orbit: a third of each face's ∫λ² to each corner.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_orbits()];
        for (f, g) in self.faces.iter().zip(&self.geometry) {
            let a: f64 = (0..quadrature::N).map(|q| g.weights[q] * conformal_factor(g.nodes[q])).sum();
            for &s in f {
                m[self.slot_orbit[s]] += a / 3.0;
            }
        }
        m
    }

    /// Lifts the triangulation of the base to the d-sheeted cyclic cover.
    pub fn lift_to_cover(&self, cover: &CyclicCover) -> Result<TriangulatedDomain> {
        if self.sheets != 1 {
            return Err(LabError::InvalidArgument("can only lift a base triangulation".into()));
        }
        let d = cover.degree;
        let ns = self.vertices.len();
        let no = self.num_orbits();
        let mut vertices = Vec::with_capacity(ns * d);
        let mut slot_orbit = Vec::with_capacity(ns * d);
        let mut slot_word = Vec::with_capacity(ns * d);
        let mut slot_deck = Vec::with_capacity(ns * d);
        let mut labels = Vec::with_capacity(ns * d);
        for k in 0..d {
            for s in 0..ns {
                let w = &self.slot_word[s];
                let k2 = (k + word_hom(&cover.hom, d, w)) % d;
                vertices.push(self.vertices[s]);
                slot_orbit.push(k2 * no + self.slot_orbit[s]);
                slot_word.push(w.clone());
                // universal deck c_k γ c_{k'}⁻¹
                let deck = cover.transversal[k]
                    .transform
                    .compose(&self.slot_deck[s])
                    .compose(&cover.transversal[k2].transform.inverse());
                slot_deck.push(deck);
                labels.push(self.labels[s]);
            }
        }
        let mut orbit_rep = Vec::with_capacity(no * d);
        for k in 0..d {
            for o in 0..no {
                orbit_rep.push(k * ns + self.orbit_rep[o]);
            }
        }
        let mut faces = Vec::with_capacity(self.faces.len() * d);
        let mut face_sheet = Vec::new();
        for k in 0..d {
            for f in &self.faces {
                faces.push(f.map(|s| k * ns + s));
                face_sheet.push(k);
            }
        }
        Ok(TriangulatedDomain {
            genus: cover.genus(),
            sheets: d,
            refinement_level: self.refinement_level,
            vertices,
            faces,
            face_sheet,
            face_boundary: (0..d).flat_map(|_| self.face_boundary.iter().copied()).collect(),
            geometry: (0..d).flat_map(|_| self.geometry.iter().cloned()).collect(),
            slot_orbit,
            slot_word,
            slot_deck,
            orbit_rep,
            base: self.base.clone(),
            hom: cover.hom.clone(),
            labels,
        })
    }

    /// Serializes to the `WPLAB-MESH v1` text format.
    pub fn to_mesh_text(&self) -> String {
        let mut s = String::new();
        let hom: Vec<String> = self.hom.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(
            s,
            "WPLAB-MESH v1 genus={} level={} sheets={} hom={}",
            self.base.genus,
            self.refinement_level,
            self.sheets,
            hom.join(",")
        );
        let base_slots = self.vertices.len() / self.sheets;
        for (i, z) in self.vertices.iter().take(base_slots).enumerate() {
            let _ = writeln!(s, "VERTEX {} {} {}", i, z.re, z.im);
        }
        for f in self.faces.iter().take(self.faces.len() / self.sheets) {
            let _ = writeln!(s, "FACE {} {} {}", f[0], f[1], f[2]);
        }
        for p in &self.base.pairings {
            let t = p.transform;
            let _ = writeln!(s, "PAIRING {} {} {} {} {} {}", p.side, p.partner, t.alpha.re, t.alpha.im, t.beta.re, t.beta.im);
        }
        for g in &self.base.generators {
            let _ = writeln!(s, "GENERATOR {} {} {} {}", g.alpha.re, g.alpha.im, g.beta.re, g.beta.im);
        }
        s
    }

    /// Rebuilds a domain from mesh text; the stored vertices and faces must be reproduced
    /// bit-exactly by the construction.
    pub fn from_mesh_text(text: &str) -> Result<TriangulatedDomain> {
        let mesh = MeshFile::parse(text)?;
        let n = 4 * mesh.genus;
        if mesh.vertices.len() < n + 1 {
            return Err(LabError::Mesh("mesh lists fewer vertices than polygon corners".into()));
        }
        let polygon: Vec<C64> = mesh.vertices[1..=n].to_vec();
        let surface = surface_from_polygon(mesh.genus, polygon);
        let mut dom = triangulate(&surface, mesh.level)?;
        if mesh.sheets > 1 {
            let cover = build_cyclic_cover(&surface, &mesh.hom, mesh.sheets)?;
            dom = dom.lift_to_cover(&cover)?;
        }
        let base_slots = dom.vertices.len() / dom.sheets;
        let same_vertices = base_slots == mesh.vertices.len()
            && dom.vertices.iter().zip(&mesh.vertices).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
        let same_faces = dom.faces.len() / dom.sheets == mesh.faces.len() && dom.faces.iter().zip(&mesh.faces).all(|(a, b)| a == b);
        if !same_vertices || !same_faces {
            return Err(LabError::Mesh("mesh does not match its reconstruction".into()));
        }
        Ok(dom)
    }
}

/// Parsed contents of a `WPLAB-MESH v1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshFile {
    pub genus: usize,
    pub level: usize,
    pub sheets: usize,
    pub hom: Vec<usize>,
    pub vertices: Vec<C64>,
    pub faces: Vec<[usize; 3]>,
    pub pairings: Vec<(usize, usize, Mobius)>,
    pub generators: Vec<Mobius>,
}

pub(crate) fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| LabError::Parse { line, message: format!("bad or missing number {:?}", tok) })
}

impl MeshFile {
    pub fn parse(text: &str) -> Result<MeshFile> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(LabError::Parse { line: 1, message: "empty mesh".into() })?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("WPLAB-MESH") || toks.next() != Some("v1") {
            return Err(LabError::Parse { line: 1, message: "expected header `WPLAB-MESH v1`".into() });
        }
        let mut m = MeshFile {
            genus: 0,
            level: 0,
            sheets: 1,
            hom: Vec::new(),
            vertices: Vec::new(),
            faces: Vec::new(),
            pairings: Vec::new(),
            generators: Vec::new(),
        };
        for t in toks {
            let (k, v) = t.split_once('=').ok_or(LabError::Parse { line: 1, message: format!("bad header field {t}") })?;
            match k {
                "genus" => m.genus = parse_num(Some(v), 1)?,
                "level" => m.level = parse_num(Some(v), 1)?,
                "sheets" => m.sheets = parse_num(Some(v), 1)?,
                "hom" => {
                    m.hom = v.split(',').filter(|x| !x.is_empty()).map(|x| parse_num(Some(x), 1)).collect::<Result<_>>()?
                }
                _ => return Err(LabError::Parse { line: 1, message: format!("unknown header field {k}") }),
            }
        }
        for (i, l) in lines {
            let line = i + 1;
            let mut t = l.split_whitespace();
            match t.next() {
                None => continue,
                Some("VERTEX") => {
                    let id: usize = parse_num(t.next(), line)?;
                    if id != m.vertices.len() {
                        return Err(LabError::Parse { line, message: format!("vertex id {id} out of order") });
                    }
                    m.vertices.push(C64::new(parse_num(t.next(), line)?, parse_num(t.next(), line)?));
                }
                Some("FACE") => m.faces.push([parse_num(t.next(), line)?, parse_num(t.next(), line)?, parse_num(t.next(), line)?]),
                Some("PAIRING") => {
                    let s = parse_num(t.next(), line)?;
                    let p = parse_num(t.next(), line)?;
                    let v: Vec<f64> = (0..4).map(|_| parse_num(t.next(), line)).collect::<Result<_>>()?;
                    m.pairings.push((s, p, Mobius { alpha: C64::new(v[0], v[1]), beta: C64::new(v[2], v[3]) }));
                }
                Some("GENERATOR") => {
                    let v: Vec<f64> = (0..4).map(|_| parse_num(t.next(), line)).collect::<Result<_>>()?;
                    m.generators.push(Mobius { alpha: C64::new(v[0], v[1]), beta: C64::new(v[2], v[3]) });
                }
                Some(other) => return Err(LabError::Parse { line, message: format!("unknown record {other}") }),
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::build_surface;
    use std::f64::consts::PI;

    #[test]
    fn blend_along_a_diameter_covers_the_straight_triangle() {
        // a geodesic through the origin is a chord; only its parametrization differs
        let z = [C64::new(0.51, 0.05), C64::new(0.5, 0.0), C64::new(0.55, 0.0)];
        let flat = face_geometry(z, None);
        let curved = face_geometry(z, Some(1));
        assert!((flat.area - curved.area).abs() < 1e-4 * flat.area);
        for q in 0..quadrature::N {
            assert!(curved.grad[q].iter().sum::<C64>().norm() < 1e-12);
            assert!((curved.bary[q].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn blended_hat_gradients_match_finite_differences() {
        let s = build_surface(2).unwrap();
        let d = triangulate(&s, 1).unwrap();
        let fi = d.face_boundary.iter().position(|b| b.is_some()).unwrap();
        let (e, _) = d.face_boundary[fi].unwrap();
        let z = d.faces[fi].map(|v| d.vertices[v]);
        let (ia, ib, ic) = ((e + 2) % 3, e, (e + 1) % 3);
        let (l1, l2) = (0.3, 0.25);
        let (_, _, g) = blended_point(z, ia, ib, ic, l1, l2);
        let h = 1e-6;
        let p = |a: f64, b: f64| blended_point(z, ia, ib, ic, a, b).0;
        let d1 = (p(l1 + h, l2) - p(l1 - h, l2)) / (2.0 * h);
        let d2 = (p(l1, l2 + h) - p(l1, l2 - h)) / (2.0 * h);
        // chain rule: ∂_z l · d + ∂_z̄ l · d̄ = ∂l along each reference direction
        let check = |gl: C64, dir: C64, expect: f64| (gl * dir + gl.conj() * dir.conj()).re - expect;
        assert!(check(g[ib], d1, 1.0).abs() < 1e-6);
        assert!(check(g[ib], d2, 0.0).abs() < 1e-6);
        assert!(check(g[ic], d2, 1.0).abs() < 1e-6);
        assert!((g[0] + g[1] + g[2]).norm() < 1e-12);
    }

    #[test]
    fn face_counts_follow_refinement() {
        let s = build_surface(2).unwrap();
        for level in 0..4 {
            let d = triangulate(&s, level).unwrap();
            assert_eq!(d.faces.len(), 8 * 4usize.pow(level as u32));
        }
    }

    #[test]
    fn euler_count_is_topological() {
        for g in [2, 3] {
            let s = build_surface(g).unwrap();
            for level in 0..4 {
                let d = triangulate(&s, level).unwrap();
                assert_eq!(d.euler_count(), 2 - 2 * g as i64, "genus {g} level {level}");
            }
        }
    }

    #[test]
    fn faces_are_positively_oriented_inside_disk() {
        let s = build_surface(2).unwrap();
        let d = triangulate(&s, 3).unwrap();
        for f in &d.faces {
            let z = f.map(|i| d.vertices[i]);
            assert!(((z[1] - z[0]).conj() * (z[2] - z[0])).im > 0.0);
        }
        assert!(d.vertices.iter().all(|z| z.norm() < 1.0 - 1e-9));
    }

    #[test]
    fn deck_words_map_representatives_to_slots() {
        let s = build_surface(2).unwrap();
        let d = triangulate(&s, 3).unwrap();
        for (slot, &o) in d.slot_orbit.iter().enumerate() {
            let rep = d.vertices[d.orbit_rep[o]];
            assert!((d.slot_deck[slot].apply(rep) - d.vertices[slot]).norm() < 1e-9);
        }
    }

    #[test]
    fn edge_lengths_halve() {
        let s = build_surface(2).unwrap();
        let h0 = triangulate(&s, 0).unwrap().max_edge_length();
        let h3 = triangulate(&s, 3).unwrap().max_edge_length();
        // boundary midpoints sit on the geodesic, which stretches edges next to the cut slightly
        assert!(h3 <= 1.05 * h0 / 8.0);
    }

    #[test]
    fn area_matches_gauss_bonnet() {
        for g in [2, 3] {
            let s = build_surface(g).unwrap();
            let d = triangulate(&s, 3).unwrap();
            let exact = 4.0 * PI * (g as f64 - 1.0);
            assert!(((d.hyperbolic_area() - exact) / exact).abs() < 1e-3);
        }
    }

    #[test]
    fn cover_doubles_area_and_keeps_euler_count() {
        let s = build_surface(2).unwrap();
        let d = triangulate(&s, 2).unwrap();
        let cover = build_cyclic_cover(&s, &[1, 0, 0, 0], 2).unwrap();
        let c = d.lift_to_cover(&cover).unwrap();
        assert_eq!(c.euler_count(), -4);
        assert!((c.hyperbolic_area() - 2.0 * d.hyperbolic_area()).abs() < 1e-10);
        assert_eq!(c.num_orbits(), 2 * d.num_orbits());
    }

    #[test]
    fn mesh_text_round_trips() {
        let s = build_surface(2).unwrap();
        let d = triangulate(&s, 2).unwrap();
        let text = d.to_mesh_text();
        let back = TriangulatedDomain::from_mesh_text(&text).unwrap();
        assert_eq!(back.to_mesh_text(), text);
        let parsed = MeshFile::parse(&text).unwrap();
        for (a, b) in parsed.vertices.iter().zip(&d.vertices) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }
}
