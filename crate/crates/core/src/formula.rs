//! STL abstract syntax.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Direction of an atomic predicate `x_i >= θ` or `x_i <= θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    Ge,
    Le,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Ge => ">=",
            Comparison::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub var: usize,
    pub cmp: Comparison,
    pub threshold: f64,
}

/// Closed interval of discrete time steps; `upper == None` is an unbounded
/// right endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lower: usize,
    pub upper: Option<usize>,
}

impl Interval {
    /// Returns `None` when `lower > upper`.
    pub fn new(lower: usize, upper: Option<usize>) -> Option<Self> {
        match upper {
            Some(u) if u < lower => None,
            _ => Some(Interval { lower, upper }),
        }
    }

    pub fn bounded(lower: usize, upper: usize) -> Self {
        Self::new(lower, Some(upper)).expect("interval lower bound exceeds upper bound")
    }

    pub fn unbounded(lower: usize) -> Self {
        Interval { lower, upper: None }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.upper {
            Some(u) => write!(f, "[{},{}]", self.lower, u),
            None => write!(f, "[{},inf]", self.lower),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Globally(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

/// Structural size measures of a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureStats {
    pub depth: usize,
    pub n_nodes: usize,
    pub n_tokens: usize,
}

impl Formula {
    pub fn atom(var: usize, cmp: Comparison, threshold: f64) -> Self {
        Formula::Atom(Atom { var, cmp, threshold })
    }

    pub fn ge(var: usize, threshold: f64) -> Self {
        Self::atom(var, Comparison::Ge, threshold)
    }

    pub fn le(var: usize, threshold: f64) -> Self {
        Self::atom(var, Comparison::Le, threshold)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn eventually(i: Interval, f: Formula) -> Self {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn globally(i: Interval, f: Formula) -> Self {
        Formula::Globally(i, Box::new(f))
    }

    pub fn until(i: Interval, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until(i, Box::new(lhs), Box::new(rhs))
    }

    /// Tree depth; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Globally(_, f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Globally(_, f) => 1 + f.n_nodes(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                1 + a.n_nodes() + b.n_nodes()
            }
        }
    }

    /// Largest variable index referenced, if any atom is present.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Formula::True => None,
            Formula::Atom(a) => Some(a.var),
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Globally(_, f) => f.max_var(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Steps at the end of the grid on which the formula is undefined because
    /// some window of a temporal operator would be empty: the largest sum of
    /// interval lower bounds along a root-to-leaf path.
    pub fn lead(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(g) => g.lead(),
            Formula::And(a, b) | Formula::Or(a, b) => a.lead().max(b.lead()),
            Formula::Eventually(i, g) | Formula::Globally(i, g) => i.lower + g.lead(),
            Formula::Until(i, a, b) => i.lower + a.lead().max(b.lead()),
        }
    }

    /// Number of grid steps a trajectory needs for the formula to be defined
    /// at `t = 0`.
    pub fn min_horizon(&self) -> usize {
        self.lead() + 1
    }

    /// Whether the formula can be evaluated at `t = 0` on trajectories of the
    /// given shape.
    pub fn fits(&self, t_steps: usize, n_vars: usize) -> bool {
        self.min_horizon() <= t_steps && self.max_var().is_none_or(|v| v < n_vars)
    }

    /// Copy with every threshold rounded to 4 significant digits, which is
    /// the precision of the canonical text form.
    pub fn rounded(&self) -> Formula {
        self.map_thresholds(&round_sig4)
    }

    fn map_thresholds(&self, g: &impl Fn(f64) -> f64) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(a) => Formula::Atom(Atom {
                threshold: g(a.threshold),
                ..*a
            }),
            Formula::Not(f) => Formula::not(f.map_thresholds(g)),
            Formula::And(a, b) => Formula::and(a.map_thresholds(g), b.map_thresholds(g)),
            Formula::Or(a, b) => Formula::or(a.map_thresholds(g), b.map_thresholds(g)),
            Formula::Eventually(i, f) => Formula::eventually(*i, f.map_thresholds(g)),
            Formula::Globally(i, f) => Formula::globally(*i, f.map_thresholds(g)),
            Formula::Until(i, a, b) => Formula::until(*i, a.map_thresholds(g), b.map_thresholds(g)),
        }
    }

    /// Visits every atom in left-to-right order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Atom>) {
            match f {
                Formula::True => {}
                Formula::Atom(a) => out.push(a),
                Formula::Not(g) | Formula::Eventually(_, g) | Formula::Globally(_, g) => walk(g, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::syntax::print(self))
    }
}

/// Rounds to 4 significant digits through the decimal representation so that
/// the result is the `f64` nearest to the printed value.
pub fn round_sig4(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let r: f64 = format!("{x:.3e}").parse().expect("formatted float re-parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
