//! Full factorial candidate sets, sum-coded model matrices, and the
//! D-criterion.
//!
//! Factor `i` has `s_i` levels coded `0..s_i`. A main effect contributes
//! `s_i - 1` columns: level `k - 1` (the `k`-th level) maps to the `k`-th unit
//! vector for `k < s_i`, and the last level maps to all `-1`. Interaction
//! blocks are the row-wise Kronecker product of the constituent main-effect
//! blocks, the lowest-indexed factor varying slowest.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};

/// Default cap on the size of an enumerated full factorial.
pub const DEFAULT_CANDIDATE_CAP: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum FactorialError {
    #[error("a factor space needs at least one factor")]
    NoFactors,
    #[error("factor A{factor} has {levels} levels; at least 2 are required")]
    TooFewLevels { factor: usize, levels: usize },
    #[error("full factorial has more than {cap} points")]
    TooManyCandidates { cap: usize },
    #[error("level {level} out of range for a factor with {levels} levels")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("cannot parse factor list {0:?}")]
    BadFactors(String),
    #[error("cannot parse model term {0:?}")]
    BadTerm(String),
    #[error("model term {term} refers to factor A{factor} but only {d} factors exist")]
    UnknownFactor { term: String, factor: usize, d: usize },
    #[error("duplicate model term {0}")]
    DuplicateTerm(String),
    #[error("the constant term must appear once, first")]
    MisplacedConstant,
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("design has {got} points but the model has {want} degrees of freedom")]
    WrongDesignSize { got: usize, want: usize },
    #[error("candidate index {0} is outside the candidate set")]
    UnknownCandidate(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorSpace {
    levels: Vec<usize>,
}

impl FactorSpace {
    pub fn new(levels: Vec<usize>) -> Result<Self, FactorialError> {
        if levels.is_empty() {
            return Err(FactorialError::NoFactors);
        }
        if let Some((i, &s)) = levels.iter().enumerate().find(|(_, &s)| s < 2) {
            return Err(FactorialError::TooFewLevels {
                factor: i + 1,
                levels: s,
            });
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn factor_count(&self) -> usize {
        self.levels.len()
    }

    /// `∏ s_i`, or `None` on overflow.
    pub fn cardinality(&self) -> Option<usize> {
        self.levels.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s))
    }

    /// Position of `point` in the lexicographic enumeration.
    pub fn index_of(&self, point: &[usize]) -> Result<usize, FactorialError> {
        let mut idx = 0usize;
        for (&z, &s) in point.iter().zip(&self.levels) {
            if z >= s {
                return Err(FactorialError::LevelOutOfRange { level: z, levels: s });
            }
            idx = idx * s + z;
        }
        Ok(idx)
    }
}

impl FromStr for FactorSpace {
    type Err = FactorialError;

    /// Comma-separated level counts, e.g. `"2,2,3"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let levels = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| FactorialError::BadFactors(s.to_string()))?;
        Self::new(levels)
    }
}

impl fmt::Display for FactorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.levels.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// All points of the full factorial in lexicographic order (last factor
/// varying fastest).
pub fn enumerate_full_factorial(space: &FactorSpace) -> Result<Vec<Vec<usize>>, FactorialError> {
    enumerate_full_factorial_capped(space, DEFAULT_CANDIDATE_CAP)
}

pub fn enumerate_full_factorial_capped(
    space: &FactorSpace,
    cap: usize,
) -> Result<Vec<Vec<usize>>, FactorialError> {
    let total = space
        .cardinality()
        .filter(|&n| n <= cap)
        .ok_or(FactorialError::TooManyCandidates { cap })?;
    let d = space.factor_count();
    let mut out = Vec::with_capacity(total);
    let mut point = vec![0usize; d];
    for _ in 0..total {
        out.push(point.clone());
        for i in (0..d).rev() {
            point[i] += 1;
            if point[i] < space.levels[i] {
                break;
            }
            point[i] = 0;
        }
    }
    Ok(out)
}

/// Sum-coded main-effect columns for a factor with `s` levels at level `level`.
pub fn main_effect_columns(level: usize, s: usize) -> Result<Vec<f64>, FactorialError> {
    if s < 2 || level >= s {
        return Err(FactorialError::LevelOutOfRange { level, levels: s });
    }
    let mut cols = vec![0.0; s - 1];
    if level + 1 < s {
        cols[level] = 1.0;
    } else {
        cols.iter_mut().for_each(|c| *c = -1.0);
    }
    Ok(cols)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Constant,
    Main(usize),
    /// Strictly increasing factor indices, at least two.
    Interaction(Vec<usize>),
}

impl Term {
    pub fn factors(&self) -> &[usize] {
        match self {
            Term::Constant => &[],
            Term::Main(i) => std::slice::from_ref(i),
            Term::Interaction(f) => f,
        }
    }

    fn column_count(&self, space: &FactorSpace) -> usize {
        self.factors()
            .iter()
            .map(|&i| space.levels[i] - 1)
            .product()
    }

    fn relabel(&self, factor_perm: &[usize]) -> Term {
        match self {
            Term::Constant => Term::Constant,
            Term::Main(i) => Term::Main(factor_perm[*i]),
            Term::Interaction(f) => {
                let mut g: Vec<usize> = f.iter().map(|&i| factor_perm[i]).collect();
                g.sort_unstable();
                Term::Interaction(g)
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Constant => f.write_str("1"),
            Term::Main(i) => write!(f, "A{}", i + 1),
            Term::Interaction(fs) => {
                let parts: Vec<String> = fs.iter().map(|i| format!("A{}", i + 1)).collect();
                f.write_str(&parts.join("*"))
            }
        }
    }
}

impl FromStr for Term {
    type Err = FactorialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term::Constant);
        }
        let mut factors = Vec::new();
        for part in s.split('*') {
            let part = part.trim();
            let digits = part
                .strip_prefix('A')
                .or_else(|| part.strip_prefix('a'))
                .ok_or_else(|| FactorialError::BadTerm(s.to_string()))?;
            let k: usize = digits
                .parse()
                .map_err(|_| FactorialError::BadTerm(s.to_string()))?;
            if k == 0 {
                return Err(FactorialError::BadTerm(s.to_string()));
            }
            factors.push(k - 1);
        }
        match factors.len() {
            1 => Ok(Term::Main(factors[0])),
            _ => {
                let set: BTreeSet<usize> = factors.iter().copied().collect();
                if set.len() != factors.len() {
                    return Err(FactorialError::BadTerm(s.to_string()));
                }
                Ok(Term::Interaction(set.into_iter().collect()))
            }
        }
    }
}

/// Effect list of the linear model. Terms are kept in canonical order:
/// the constant, then main effects, then interactions (each group in the
/// order supplied).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    terms: Vec<Term>,
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>, space: &FactorSpace) -> Result<Self, FactorialError> {
        let d = space.factor_count();
        if terms.first() != Some(&Term::Constant)
            || terms.iter().filter(|t| **t == Term::Constant).count() != 1
        {
            return Err(FactorialError::MisplacedConstant);
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if let Some(&bad) = t.factors().iter().find(|&&i| i >= d) {
                return Err(FactorialError::UnknownFactor {
                    term: t.to_string(),
                    factor: bad + 1,
                    d,
                });
            }
            if !seen.insert(t.clone()) {
                return Err(FactorialError::DuplicateTerm(t.to_string()));
            }
        }
        let mains = terms.iter().filter(|t| matches!(t, Term::Main(_)));
        let inters = terms.iter().filter(|t| matches!(t, Term::Interaction(_)));
        let terms = std::iter::once(Term::Constant)
            .chain(mains.cloned())
            .chain(inters.cloned())
            .collect();
        Ok(Self { terms })
    }

    /// Constant plus all main effects.
    pub fn main_effects(space: &FactorSpace) -> Self {
        let terms = std::iter::once(Term::Constant)
            .chain((0..space.factor_count()).map(Term::Main))
            .collect();
        Self { terms }
    }

    /// Constant, all main effects, and all two-factor interactions.
    pub fn main_and_two_factor(space: &FactorSpace) -> Self {
        let d = space.factor_count();
        let mut terms = Self::main_effects(space).terms;
        for a in 0..d {
            for b in a + 1..d {
                terms.push(Term::Interaction(vec![a, b]));
            }
        }
        Self { terms }
    }

    /// Parses `"main"`, `"main+2fi"`, or an explicit list like
    /// `"1 + A1 + A2 + A1*A3"`. A missing constant is prepended.
    pub fn parse(s: &str, space: &FactorSpace) -> Result<Self, FactorialError> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.to_ascii_lowercase().as_str() {
            "main" => return Ok(Self::main_effects(space)),
            "main+2fi" => return Ok(Self::main_and_two_factor(space)),
            _ => {}
        }
        let mut terms = s
            .split('+')
            .map(Term::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        if !terms.contains(&Term::Constant) {
            terms.insert(0, Term::Constant);
        }
        Self::new(terms, space)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Degrees of freedom `p`, i.e. the number of model-matrix columns.
    pub fn degrees_of_freedom(&self, space: &FactorSpace) -> usize {
        self.terms.iter().map(|t| t.column_count(space)).sum()
    }

    /// The model row for one point.
    pub fn encode(&self, point: &[usize], space: &FactorSpace) -> Result<Vec<f64>, FactorialError> {
        let mut row = Vec::with_capacity(self.degrees_of_freedom(space));
        for term in &self.terms {
            let mut block = vec![1.0];
            for &i in term.factors() {
                let main = main_effect_columns(point[i], space.levels[i])?;
                block = block
                    .iter()
                    .flat_map(|&a| main.iter().map(move |&b| a * b))
                    .collect();
            }
            row.extend(block);
        }
        Ok(row)
    }

    fn relabeled(&self, factor_perm: &[usize]) -> BTreeSet<Term> {
        self.terms.iter().map(|t| t.relabel(factor_perm)).collect()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(" + "))
    }
}

pub fn build_model_matrix(
    points: &[Vec<usize>],
    model: &ModelSpec,
    space: &FactorSpace,
) -> Result<Matrix, FactorialError> {
    let rows = points
        .iter()
        .map(|p| model.encode(p, space))
        .collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, model.degrees_of_freedom(space)));
    }
    Ok(Matrix::from_rows(&rows))
}

/// `det(X'X)`; for a square `X` this is `det(X)^2`. Singular (to within
/// round-off) designs give 0.
pub fn d_criterion(x: &Matrix) -> f64 {
    if x.is_square() {
        let d = linalg::thresholded_det(x);
        d * d
    } else {
        linalg::thresholded_det(&x.gram())
    }
}

/// D-efficiency in percent, `100 * D^(1/p) / p`.
pub fn d_efficiency(d_value: f64, p: usize) -> f64 {
    let p_f = p as f64;
    100.0 * d_value.max(0.0).powf(1.0 / p_f) / p_f
}

/// A search problem: factor space, model, the candidate set (the full
/// factorial), and the candidate model matrix.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    space: FactorSpace,
    model: ModelSpec,
    candidates: Vec<Vec<usize>>,
    candidate_matrix: Matrix,
}

impl DesignProblem {
    pub fn new(space: FactorSpace, model: ModelSpec) -> Result<Self, FactorialError> {
        let candidates = enumerate_full_factorial(&space)?;
        let candidate_matrix = build_model_matrix(&candidates, &model, &space)?;
        Ok(Self {
            space,
            model,
            candidates,
            candidate_matrix,
        })
    }

    /// A problem restricted to a subset of the full factorial.
    pub fn with_candidates(
        space: FactorSpace,
        model: ModelSpec,
        candidates: Vec<Vec<usize>>,
    ) -> Result<Self, FactorialError> {
        for c in &candidates {
            space.index_of(c)?;
        }
        let candidate_matrix = build_model_matrix(&candidates, &model, &space)?;
        Ok(Self {
            space,
            model,
            candidates,
            candidate_matrix,
        })
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn candidates(&self) -> &[Vec<usize>] {
        &self.candidates
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// Model row of candidate `idx`.
    pub fn candidate_row(&self, idx: usize) -> &[f64] {
        self.candidate_matrix.row(idx)
    }

    pub fn candidate_matrix(&self) -> &Matrix {
        &self.candidate_matrix
    }

    pub fn p(&self) -> usize {
        self.model.degrees_of_freedom(&self.space)
    }
}

/// A saturated design: `p` candidate indices with the cached model matrix and
/// D value.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    points: Vec<usize>,
    matrix: Matrix,
    d_value: f64,
}

impl Design {
    pub fn from_points(problem: &DesignProblem, points: Vec<usize>) -> Result<Self, FactorialError> {
        let p = problem.p();
        if points.len() != p {
            return Err(FactorialError::WrongDesignSize {
                got: points.len(),
                want: p,
            });
        }
        let mut matrix = Matrix::zeros(p, p);
        for (r, &idx) in points.iter().enumerate() {
            if idx >= problem.candidate_count() {
                return Err(FactorialError::UnknownCandidate(idx));
            }
            matrix.set_row(r, problem.candidate_row(idx));
        }
        let d_value = d_criterion(&matrix);
        Ok(Self {
            points,
            matrix,
            d_value,
        })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn d_value(&self) -> f64 {
        self.d_value
    }

    pub fn efficiency(&self) -> f64 {
        d_efficiency(self.d_value, self.points.len())
    }

    /// Design rows as level tuples.
    pub fn level_rows<'a>(&'a self, problem: &'a DesignProblem) -> impl Iterator<Item = &'a [usize]> {
        self.points.iter().map(move |&i| problem.candidates()[i].as_slice())
    }
}

fn check_permutation(perm: &[usize], n: usize, what: &str) -> Result<(), FactorialError> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(FactorialError::InvalidPermutation(format!(
            "{what} has length {} (expected {n})",
            perm.len()
        )));
    }
    for &v in perm {
        if v >= n || std::mem::replace(&mut seen[v], true) {
            return Err(FactorialError::InvalidPermutation(format!(
                "{what} is not a permutation of 0..{n}"
            )));
        }
    }
    Ok(())
}

/// Relabels factors, reorders runs, and switches levels of `design`.
///
/// Row `r` of the result is old row `row_perm[r]`; old factor `i` becomes
/// factor `factor_perm[i]`, and its level `z` becomes `level_switches[i][z]`.
/// Factor relabeling is only allowed between factors with the same number of
/// levels and must map the model's term set onto itself.
pub fn apply_isomorphism(
    problem: &DesignProblem,
    design: &Design,
    row_perm: &[usize],
    factor_perm: &[usize],
    level_switches: &[Vec<usize>],
) -> Result<Design, FactorialError> {
    let space = problem.space();
    let d = space.factor_count();
    check_permutation(row_perm, design.points.len(), "row permutation")?;
    check_permutation(factor_perm, d, "factor permutation")?;
    if level_switches.len() != d {
        return Err(FactorialError::InvalidPermutation(format!(
            "{} level switches for {d} factors",
            level_switches.len()
        )));
    }
    for (i, sw) in level_switches.iter().enumerate() {
        check_permutation(sw, space.levels[i], &format!("level switch of A{}", i + 1))?;
        if space.levels[factor_perm[i]] != space.levels[i] {
            return Err(FactorialError::InvalidPermutation(format!(
                "A{} and A{} have different level counts",
                i + 1,
                factor_perm[i] + 1
            )));
        }
    }
    let original: BTreeSet<Term> = problem.model().terms.iter().cloned().collect();
    if problem.model().relabeled(factor_perm) != original {
        return Err(FactorialError::InvalidPermutation(
            "factor relabeling does not preserve the model".into(),
        ));
    }
    let mut points = Vec::with_capacity(design.points.len());
    for &src in row_perm {
        let old = &problem.candidates()[design.points[src]];
        let mut new = vec![0usize; d];
        for i in 0..d {
            new[factor_perm[i]] = level_switches[i][old[i]];
        }
        points.push(space.index_of(&new)?);
    }
    Design::from_points(problem, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space(levels: &[usize]) -> FactorSpace {
        FactorSpace::new(levels.to_vec()).unwrap()
    }

    #[test]
    fn factor_space_validation() {
        assert_eq!(FactorSpace::new(vec![]), Err(FactorialError::NoFactors));
        assert!(matches!(
            FactorSpace::new(vec![2, 1]),
            Err(FactorialError::TooFewLevels { factor: 2, levels: 1 })
        ));
        assert_eq!("2, 3".parse::<FactorSpace>().unwrap().levels(), &[2, 3]);
        assert!("2,x".parse::<FactorSpace>().is_err());
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let pts = enumerate_full_factorial(&space(&[2, 2])).unwrap();
        assert_eq!(pts, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let pts = enumerate_full_factorial(&space(&[3])).unwrap();
        assert_eq!(pts, vec![vec![0], vec![1], vec![2]]);
        let pts = enumerate_full_factorial(&space(&[2; 7])).unwrap();
        assert_eq!(pts.len(), 128);
        let uniq: BTreeSet<_> = pts.iter().collect();
        assert_eq!(uniq.len(), 128);
        let s = space(&[3, 2, 4]);
        for (i, p) in enumerate_full_factorial(&s).unwrap().iter().enumerate() {
            assert_eq!(s.index_of(p).unwrap(), i);
        }
    }

    #[test]
    fn enumeration_cap() {
        let s = space(&[10, 10, 10]);
        assert_eq!(
            enumerate_full_factorial_capped(&s, 999),
            Err(FactorialError::TooManyCandidates { cap: 999 })
        );
        assert!(enumerate_full_factorial(&space(&[10; 7])).is_err());
    }

    #[test]
    fn main_effect_coding() {
        assert_eq!(main_effect_columns(0, 2).unwrap(), vec![1.0]);
        assert_eq!(main_effect_columns(1, 2).unwrap(), vec![-1.0]);
        assert_eq!(main_effect_columns(2, 3).unwrap(), vec![-1.0, -1.0]);
        assert_eq!(main_effect_columns(1, 3).unwrap(), vec![0.0, 1.0]);
        assert_eq!(main_effect_columns(0, 3).unwrap(), vec![1.0, 0.0]);
        assert!(main_effect_columns(3, 3).is_err());
    }

    #[test]
    fn model_grammar() {
        let s = space(&[2; 7]);
        let m = ModelSpec::parse("main+2fi", &s).unwrap();
        assert_eq!(m.degrees_of_freedom(&s), 29);
        assert_eq!(ModelSpec::parse("main", &s).unwrap().degrees_of_freedom(&s), 8);

        let s = space(&[3, 2, 4]);
        let m = ModelSpec::parse("1 + A1 + A2 + A1*A3", &s).unwrap();
        assert_eq!(m.degrees_of_freedom(&s), 1 + 2 + 1 + 2 * 3);
        assert_eq!(m.to_string(), "1 + A1 + A2 + A1*A3");

        // interactions are moved after the mains
        let m = ModelSpec::parse("1 + A3*A1 + A2", &s).unwrap();
        assert_eq!(m.to_string(), "1 + A2 + A1*A3");
        // constant added when missing
        assert_eq!(ModelSpec::parse("A1", &s).unwrap().to_string(), "1 + A1");

        assert!(matches!(
            ModelSpec::parse("1 + A4", &s),
            Err(FactorialError::UnknownFactor { factor: 4, .. })
        ));
        assert!(matches!(
            ModelSpec::parse("1 + A1 + A1", &s),
            Err(FactorialError::DuplicateTerm(_))
        ));
        assert!(matches!(ModelSpec::parse("1 + A1*A1", &s), Err(FactorialError::BadTerm(_))));
        assert!(matches!(ModelSpec::parse("A1 + 1", &s), Err(FactorialError::MisplacedConstant)));
        assert!(matches!(ModelSpec::parse("1 + B2", &s), Err(FactorialError::BadTerm(_))));
    }

    #[test]
    fn model_matrix_two_by_two() {
        let s = space(&[2, 2]);
        let pts = enumerate_full_factorial(&s).unwrap();
        let m = ModelSpec::main_effects(&s);
        let x = build_model_matrix(&pts, &m, &s).unwrap();
        let want = Matrix::from_rows(&[
            [1.0, 1.0, 1.0],
            [1.0, 1.0, -1.0],
            [1.0, -1.0, 1.0],
            [1.0, -1.0, -1.0],
        ]);
        assert_eq!(x, want);

        let m = ModelSpec::main_and_two_factor(&s);
        let x = build_model_matrix(&pts, &m, &s).unwrap();
        assert_eq!(x.row(3), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn interaction_block_order() {
        // A1 has 3 levels, A2 has 3 levels: block is a1 (x) a2, a1 slowest
        let s = space(&[3, 3]);
        let m = ModelSpec::parse("1 + A1*A2", &s).unwrap();
        let row = m.encode(&[1, 2], &s).unwrap();
        // a1 = (0,1), a2 = (-1,-1)
        assert_eq!(row, vec![1.0, 0.0, 0.0, -1.0, -1.0]);
        let row = m.encode(&[0, 1], &s).unwrap();
        assert_eq!(row, vec![1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn full_factorial_is_balanced_and_full_rank() {
        for (levels, model) in [
            (vec![2, 2], "main+2fi"),
            (vec![3, 2], "main"),
            (vec![3, 3, 2], "main+2fi"),
            (vec![4, 3], "1 + A1 + A2 + A1*A2"),
            (vec![2, 2, 2, 2], "1 + A1 + A2 + A3 + A4 + A1*A2*A3"),
            (vec![2; 7], "main+2fi"),
        ] {
            let s = space(&levels);
            let m = ModelSpec::parse(model, &s).unwrap();
            let pts = enumerate_full_factorial(&s).unwrap();
            let x = build_model_matrix(&pts, &m, &s).unwrap();
            let p = m.degrees_of_freedom(&s);
            assert_eq!(x.ncols(), p);
            assert_eq!(x.rank(), p, "{levels:?} {model}");
            for c in 1..p {
                let sum: f64 = (0..x.nrows()).map(|r| x[(r, c)]).sum();
                assert_eq!(sum, 0.0, "column {c} of {levels:?} {model}");
            }
        }
    }

    #[test]
    fn d_criterion_examples() {
        assert_eq!(d_criterion(&Matrix::identity(3)), 1.0);
        let s = space(&[2, 2]);
        let problem = DesignProblem::new(s.clone(), ModelSpec::main_effects(&s)).unwrap();
        let design = Design::from_points(&problem, vec![0, 1, 2]).unwrap();
        assert_relative_eq!(design.d_value(), 16.0, max_relative = 1e-12);
        let dup = Design::from_points(&problem, vec![0, 1, 1]).unwrap();
        assert_eq!(dup.d_value(), 0.0);
        // non-square: the full factorial, X'X = 4 I
        assert_relative_eq!(d_criterion(problem.candidate_matrix()), 64.0, max_relative = 1e-12);
    }

    #[test]
    fn design_size_is_checked() {
        let s = space(&[2, 2]);
        let problem = DesignProblem::new(s.clone(), ModelSpec::main_effects(&s)).unwrap();
        assert!(matches!(
            Design::from_points(&problem, vec![0, 1]),
            Err(FactorialError::WrongDesignSize { got: 2, want: 3 })
        ));
        assert!(matches!(
            Design::from_points(&problem, vec![0, 1, 7]),
            Err(FactorialError::UnknownCandidate(7))
        ));
    }

    #[test]
    fn efficiency_examples() {
        assert_relative_eq!(d_efficiency(9.0911e39, 29), 82.3162, epsilon = 1e-3);
        assert_eq!(d_efficiency(1.0, 1), 100.0);
        assert_relative_eq!(d_efficiency(16.0, 3), 100.0 * 16f64.cbrt() / 3.0, max_relative = 1e-14);
        assert_relative_eq!(d_efficiency(16.0, 3), 83.9947, epsilon = 1e-4);
        assert_eq!(d_efficiency(0.0, 5), 0.0);
    }

    #[test]
    fn isomorphism_examples() {
        let s = space(&[2, 2]);
        let problem = DesignProblem::new(s.clone(), ModelSpec::main_effects(&s)).unwrap();
        let design = Design::from_points(&problem, vec![0, 1, 2]).unwrap();
        let id = apply_isomorphism(&problem, &design, &[0, 1, 2], &[0, 1], &[vec![0, 1], vec![0, 1]])
            .unwrap();
        assert_eq!(id, design);

        let rev = apply_isomorphism(&problem, &design, &[2, 1, 0], &[0, 1], &[vec![0, 1], vec![0, 1]])
            .unwrap();
        assert_eq!(rev.points(), &[2, 1, 0]);
        assert_relative_eq!(rev.d_value(), 16.0, max_relative = 1e-12);

        let sw = apply_isomorphism(&problem, &design, &[0, 1, 2], &[0, 1], &[vec![1, 0], vec![0, 1]])
            .unwrap();
        assert_eq!(sw.points(), &[2, 3, 0]);
        assert_relative_eq!(sw.d_value(), 16.0, max_relative = 1e-12);
    }

    #[test]
    fn isomorphism_rejects_bad_permutations() {
        let s = space(&[3, 2]);
        let problem = DesignProblem::new(s.clone(), ModelSpec::main_effects(&s)).unwrap();
        let design = Design::from_points(&problem, vec![0, 1, 2, 3]).unwrap();
        let ok_sw = [vec![0, 1, 2], vec![0, 1]];
        assert!(apply_isomorphism(&problem, &design, &[0, 0, 1, 2], &[0, 1], &ok_sw).is_err());
        // 3-level and 2-level factors cannot be swapped
        assert!(apply_isomorphism(&problem, &design, &[0, 1, 2, 3], &[1, 0], &ok_sw).is_err());
        assert!(apply_isomorphism(&problem, &design, &[0, 1, 2, 3], &[0, 1], &[vec![0, 1, 1], vec![0, 1]])
            .is_err());

        // relabeling that breaks the model
        let s = space(&[2, 2, 2]);
        let m = ModelSpec::parse("1 + A1 + A2 + A3 + A1*A2", &s).unwrap();
        let problem = DesignProblem::new(s, m).unwrap();
        let design = Design::from_points(&problem, vec![0, 1, 2, 4, 7]).unwrap();
        let sw = vec![vec![0, 1]; 3];
        assert!(apply_isomorphism(&problem, &design, &[0, 1, 2, 3, 4], &[0, 2, 1], &sw).is_err());
        assert!(apply_isomorphism(&problem, &design, &[0, 1, 2, 3, 4], &[1, 0, 2], &sw).is_ok());
    }
}
