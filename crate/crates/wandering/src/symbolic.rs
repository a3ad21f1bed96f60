//! Finite oriented graphs, admissible words, one-sided sequences and the
//! cylinder metric.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether an arrow carries a hyperbolic transformation or a fold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrowKind {
    Hyperbolic,
    Fold,
}

/// Arrow with origin `o` and target `t` given by vertex labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrow {
    pub label: String,
    pub o: String,
    pub t: String,
    pub kind: ArrowKind,
}

/// Finite oriented graph whose arrows index the pieces of a system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct TransitionGraph {
    vertices: Vec<String>,
    arrows: Vec<Arrow>,
    #[serde(skip)]
    ends: Vec<(usize, usize)>,
    #[serde(skip)]
    by_label: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    vertices: Vec<String>,
    arrows: Vec<Arrow>,
}

impl TryFrom<GraphRepr> for TransitionGraph {
    type Error = Error;
    fn try_from(r: GraphRepr) -> Result<Self> {
        TransitionGraph::new(r.vertices, r.arrows)
    }
}

impl From<TransitionGraph> for GraphRepr {
    fn from(g: TransitionGraph) -> Self {
        GraphRepr { vertices: g.vertices, arrows: g.arrows }
    }
}

impl TransitionGraph {
    pub fn new(vertices: Vec<String>, arrows: Vec<Arrow>) -> Result<Self> {
        let vindex: HashMap<&str, usize> =
            vertices.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        if vindex.len() != vertices.len() {
            return Err(Error::Construction("duplicate vertex label".into()));
        }
        let mut ends = Vec::with_capacity(arrows.len());
        let mut by_label = HashMap::new();
        for (k, a) in arrows.iter().enumerate() {
            let o = *vindex
                .get(a.o.as_str())
                .ok_or_else(|| Error::Construction(format!("arrow `{}` has unknown origin `{}`", a.label, a.o)))?;
            let t = *vindex
                .get(a.t.as_str())
                .ok_or_else(|| Error::Construction(format!("arrow `{}` has unknown target `{}`", a.label, a.t)))?;
            if by_label.insert(a.label.clone(), k).is_some() {
                return Err(Error::Construction(format!("duplicate arrow label `{}`", a.label)));
            }
            ends.push((o, t));
        }
        Ok(TransitionGraph { vertices, arrows, ends, by_label })
    }

    /// Single vertex with hyperbolic arrows `a1..an` and fold arrows `f1..fm`.
    pub fn single_vertex(n_hyperbolic: usize, n_fold: usize) -> Self {
        let v = "v".to_string();
        let mut arrows = Vec::new();
        for j in 1..=n_hyperbolic {
            arrows.push(Arrow { label: format!("a{j}"), o: v.clone(), t: v.clone(), kind: ArrowKind::Hyperbolic });
        }
        for j in 1..=n_fold {
            arrows.push(Arrow { label: format!("f{j}"), o: v.clone(), t: v.clone(), kind: ArrowKind::Fold });
        }
        TransitionGraph::new(vec![v], arrows).expect("well-formed single-vertex graph")
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn arrows(&self) -> &[Arrow] {
        &self.arrows
    }

    pub fn arrow_index(&self, label: &str) -> Result<usize> {
        self.by_label.get(label).copied().ok_or_else(|| Error::UnknownArrow(label.to_string()))
    }

    pub fn origin(&self, arrow: usize) -> usize {
        self.ends[arrow].0
    }

    pub fn target(&self, arrow: usize) -> usize {
        self.ends[arrow].1
    }

    pub fn kind(&self, arrow: usize) -> ArrowKind {
        self.arrows[arrow].kind
    }

    pub fn label(&self, arrow: usize) -> &str {
        &self.arrows[arrow].label
    }

    pub fn hyperbolic_arrows(&self) -> Vec<usize> {
        (0..self.arrows.len()).filter(|&a| self.kind(a) == ArrowKind::Hyperbolic).collect()
    }

    /// Hyperbolic subgraph is strongly connected and not a single cycle (positive entropy).
    pub fn is_transitive(&self) -> bool {
        let hyp = self.hyperbolic_arrows();
        let nv = self.vertices.len();
        if nv == 0 || hyp.is_empty() {
            return false;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; nv];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for &a in &hyp {
                    let (o, t) = self.ends[a];
                    let (from, to) = if forward { (o, t) } else { (t, o) };
                    if from == v && !seen[to] {
                        seen[to] = true;
                        queue.push_back(to);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        reach(true) && reach(false) && hyp.len() > nv
    }

    /// Builds a word from labels, failing on unknown labels or broken composition.
    pub fn word(&self, labels: &[&str]) -> Result<Word> {
        let letters = labels.iter().map(|l| self.arrow_index(l)).collect::<Result<Vec<_>>>()?;
        Word::from_letters(letters, self)
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".to_string();
        }
        w.letters.iter().map(|&a| self.label(a)).collect::<Vec<_>>().join("")
    }

    /// Shortest hyperbolic path from vertex `from` to vertex `to` (empty when equal).
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if from == to {
            return Some(Vec::new());
        }
        let mut prev: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut seen = HashSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for a in self.hyperbolic_arrows() {
                let (o, t) = self.ends[a];
                if o == v && seen.insert(t) {
                    prev.insert(t, (v, a));
                    if t == to {
                        let mut path = vec![a];
                        let mut cur = v;
                        while cur != from {
                            let (p, arr) = prev[&cur];
                            path.push(arr);
                            cur = p;
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(t);
                }
            }
        }
        None
    }
}

/// Checks a labelled word: `Err` on unknown labels, `Ok(false)` on broken composition.
pub fn validate_word(labels: &[&str], graph: &TransitionGraph) -> Result<bool> {
    let letters = labels.iter().map(|l| graph.arrow_index(l)).collect::<Result<Vec<_>>>()?;
    Ok(letters.windows(2).all(|w| graph.target(w[0]) == graph.origin(w[1])))
}

/// Admissible finite word; letters are arrow indices of a graph.
///
/// Equality and hashing look at the letters only.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Word {
    letters: Vec<usize>,
    origin: Option<usize>,
    target: Option<usize>,
}

impl Word {
    /// The empty word.
    pub fn empty() -> Self {
        Word::default()
    }

    pub fn from_letters(letters: Vec<usize>, graph: &TransitionGraph) -> Result<Self> {
        for &a in &letters {
            if a >= graph.arrows().len() {
                return Err(Error::UnknownArrow(format!("#{a}")));
            }
        }
        for w in letters.windows(2) {
            if graph.target(w[0]) != graph.origin(w[1]) {
                return Err(Error::Composition {
                    left: graph.label(w[0]).to_string(),
                    right: graph.label(w[1]).to_string(),
                });
            }
        }
        let origin = letters.first().map(|&a| graph.origin(a));
        let target = letters.last().map(|&a| graph.target(a));
        Ok(Word { letters, origin, target })
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn origin(&self) -> Option<usize> {
        self.origin
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn first(&self) -> Option<usize> {
        self.letters.first().copied()
    }

    pub fn last(&self) -> Option<usize> {
        self.letters.last().copied()
    }

    /// Sub-word `[lo, hi)`, endpoints re-derived from the parent graph.
    pub fn slice(&self, lo: usize, hi: usize, graph: &TransitionGraph) -> Word {
        Word::from_letters(self.letters[lo..hi].to_vec(), graph).expect("sub-word of an admissible word")
    }
}

impl PartialEq for Word {
    fn eq(&self, other: &Self) -> bool {
        self.letters == other.letters
    }
}

impl Eq for Word {}

impl std::hash::Hash for Word {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.letters.hash(state);
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.letters.iter().map(|a| format!("#{a}")).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// Concatenation; fails when the target of `c` differs from the origin of `c2`.
pub fn concat(c: &Word, c2: &Word) -> Result<Word> {
    if c.is_empty() {
        return Ok(c2.clone());
    }
    if c2.is_empty() {
        return Ok(c.clone());
    }
    if c.target != c2.origin {
        return Err(Error::Composition {
            left: format!("vertex {:?}", c.target),
            right: format!("vertex {:?}", c2.origin),
        });
    }
    let mut letters = c.letters.clone();
    letters.extend_from_slice(&c2.letters);
    Ok(Word { letters, origin: c.origin, target: c2.target })
}

/// Direction of a one-sided infinite sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `s1 s2 s3 ...`
    Right,
    /// `... u-3 u-2 u-1`
    Left,
}

/// Eventually periodic one-sided sequence.
///
/// For `Right`, the letters are `head` followed by `period` repeated forever.
/// For `Left`, they are `period` repeated forever to the left followed by `head`,
/// so `head.last()` is the letter adjacent to the present.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OneSidedSequence {
    side: Side,
    head: Vec<usize>,
    period: Vec<usize>,
}

impl OneSidedSequence {
    pub fn new(side: Side, head: Vec<usize>, period: Vec<usize>, graph: &TransitionGraph) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::Construction("periodic tail must be non-empty".into()));
        }
        let seq = OneSidedSequence { side, head, period };
        let probe = seq.head.len() + 2 * seq.period.len() + 1;
        Word::from_letters(seq.truncate(probe).letters, graph)?;
        Ok(seq)
    }

    /// Constant sequence `a a a ...` on the given side.
    pub fn constant(side: Side, letter: usize, graph: &TransitionGraph) -> Result<Self> {
        Self::new(side, Vec::new(), vec![letter], graph)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn head(&self) -> &[usize] {
        &self.head
    }

    pub fn period(&self) -> &[usize] {
        &self.period
    }

    pub fn preperiod(&self) -> usize {
        self.head.len()
    }

    /// Letter at distance `i` (0-based) from the present.
    pub fn letter(&self, i: usize) -> usize {
        let h = self.head.len();
        let q = self.period.len();
        match self.side {
            Side::Right => {
                if i < h {
                    self.head[i]
                } else {
                    self.period[(i - h) % q]
                }
            }
            Side::Left => {
                if i < h {
                    self.head[h - 1 - i]
                } else {
                    self.period[q - 1 - (i - h) % q]
                }
            }
        }
    }

    /// The `m` letters nearest the present, in forward order.
    pub fn truncate(&self, m: usize) -> Word {
        let letters: Vec<usize> = match self.side {
            Side::Right => (0..m).map(|i| self.letter(i)).collect(),
            Side::Left => (0..m).rev().map(|i| self.letter(i)).collect(),
        };
        // endpoints are filled lazily by callers holding the graph; keep letters exact
        Word { letters, origin: None, target: None }
    }

    /// Truncation with endpoints resolved against the graph.
    pub fn truncate_in(&self, m: usize, graph: &TransitionGraph) -> Word {
        Word::from_letters(self.truncate(m).letters, graph).expect("truncations are admissible")
    }

    /// Drops the letter adjacent to the present.
    pub fn shift(&self) -> Self {
        let mut out = self.clone();
        match self.side {
            Side::Right => {
                if out.head.is_empty() {
                    out.period.rotate_left(1);
                } else {
                    out.head.remove(0);
                }
            }
            Side::Left => {
                if out.head.is_empty() {
                    out.period.rotate_right(1);
                } else {
                    out.head.pop();
                }
            }
        }
        out
    }
}

/// Cylinder distance together with its truncation flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderDistance {
    pub value: f64,
    /// Set when the sequences agree up to the horizon, so the value is a lower bound.
    pub lower_bound: bool,
}

/// `2^{-i*}` with `i*` the first differing index (1-based), compared up to `horizon`.
pub fn cylinder_distance(s: &OneSidedSequence, s2: &OneSidedSequence, horizon: usize) -> CylinderDistance {
    for i in 0..horizon {
        if s.letter(i) != s2.letter(i) {
            return CylinderDistance { value: 0.5f64.powi(i as i32 + 1), lower_bound: false };
        }
    }
    CylinderDistance { value: 0.0, lower_bound: true }
}

/// Cylinder distance between two finite truncations of equal depth.
pub fn truncation_distance(a: &[u16], b: &[u16]) -> f64 {
    a.iter()
        .zip(b)
        .position(|(x, y)| x != y)
        .map(|i| 0.5f64.powi(i as i32 + 1))
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TransitionGraph {
        TransitionGraph::single_vertex(6, 5)
    }

    fn two_vertex() -> TransitionGraph {
        let arrows = vec![Arrow { label: "a".into(), o: "v".into(), t: "w".into(), kind: ArrowKind::Hyperbolic }];
        TransitionGraph::new(vec!["v".into(), "w".into()], arrows).unwrap()
    }

    #[test]
    fn validate_examples() {
        let g = model();
        assert!(validate_word(&["a1", "a3", "f2", "a6"], &g).unwrap());
        assert!(validate_word(&[], &g).unwrap());
        assert!(!validate_word(&["a", "a"], &two_vertex()).unwrap());
        assert!(matches!(validate_word(&["zz"], &g), Err(Error::UnknownArrow(_))));
    }

    #[test]
    fn concat_examples() {
        let g = model();
        let a1 = g.word(&["a1"]).unwrap();
        let a2 = g.word(&["a2"]).unwrap();
        assert_eq!(concat(&a1, &Word::empty()).unwrap(), a1);
        let c = concat(&a1, &a2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(g.format_word(&c), "a1a2");
        let tv = two_vertex();
        let a = tv.word(&["a"]).unwrap();
        assert!(concat(&a, &a).is_err());
    }

    #[test]
    fn concat_associative_exhaustive() {
        let g = TransitionGraph::single_vertex(2, 1);
        let mut words = vec![Word::empty()];
        for a in 0..3 {
            words.push(Word::from_letters(vec![a], &g).unwrap());
            for b in 0..3 {
                words.push(Word::from_letters(vec![a, b], &g).unwrap());
            }
        }
        for x in &words {
            for y in &words {
                for z in &words {
                    let l = concat(&concat(x, y).unwrap(), z).unwrap();
                    let r = concat(x, &concat(y, z).unwrap()).unwrap();
                    assert_eq!(l, r);
                }
            }
        }
    }

    #[test]
    fn graph_json_round_trip() {
        let g = TransitionGraph::single_vertex(2, 1);
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"kind\":\"fold\""));
        assert!(text.contains("\"o\":\"v\""));
        let back: TransitionGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back.arrow_index("f1").unwrap(), 2);
        let bad = r#"{"vertices":["v"],"arrows":[{"label":"a","o":"v","t":"x","kind":"hyperbolic"}]}"#;
        assert!(serde_json::from_str::<TransitionGraph>(bad).is_err());
    }

    #[test]
    fn truncation_examples() {
        let g = model();
        let a1 = g.arrow_index("a1").unwrap();
        let s = OneSidedSequence::constant(Side::Right, a1, &g).unwrap();
        assert_eq!(g.format_word(&s.truncate_in(3, &g)), "a1a1a1");
        let u = OneSidedSequence::new(Side::Left, vec![2, 3], vec![0, 1], &g).unwrap();
        assert_eq!(u.truncate(3).letters(), &[1, 2, 3]);
        assert_eq!(u.truncate(5).letters(), &[1, 0, 1, 2, 3]);
    }

    #[test]
    fn periodic_block_extension() {
        let g = model();
        for q in 1..=3 {
            let period: Vec<usize> = (0..q).collect();
            let s = OneSidedSequence::new(Side::Right, vec![5, 4], period.clone(), &g).unwrap();
            for m in s.preperiod()..s.preperiod() + 7 {
                let longer = s.truncate(m + q);
                let mut expect = s.truncate(m).letters().to_vec();
                let start = (m - s.preperiod()) % q;
                for k in 0..q {
                    expect.push(period[(start + k) % q]);
                }
                assert_eq!(longer.letters(), expect.as_slice());
            }
        }
    }

    #[test]
    fn cylinder_examples() {
        let g = model();
        let s = OneSidedSequence::constant(Side::Right, 0, &g).unwrap();
        let d = cylinder_distance(&s, &s, 20);
        assert_eq!(d.value, 0.0);
        assert!(d.lower_bound);
        let t = OneSidedSequence::constant(Side::Right, 1, &g).unwrap();
        assert_eq!(cylinder_distance(&s, &t, 20).value, 0.5);
        let r = OneSidedSequence::new(Side::Right, vec![0, 0, 0], vec![1], &g).unwrap();
        assert_eq!(cylinder_distance(&s, &r, 20).value, 0.0625);
    }

    #[test]
    fn transitivity() {
        assert!(model().is_transitive());
        assert!(!two_vertex().is_transitive());
    }
}
