//! Additive formula grammar.
//!
//! ```text
//! formula := term ('+' term)*
//! term    := 'int'
//!          | 'lin(' name ')' | 'lin(' name ',' name ')'
//!          | 'sm(' name ')'  | 'sm(' name ',' name ')'
//!          | 'cat(' name ')' | 'spatial(' name ',' name ')'
//!          | 'by(' term ',' name ')'
//! ```
//!
//! `lin(a, b)` is the centred product `a * b`; `sm(a, b)` is the tensor
//! surface deviating from `{1, a, b, ab}`; `spatial(x, y)` expands to
//! `lin(x) + lin(y) + lin(x, y) + sm(x, y)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bspline::SplineConfig;
use super::learner::{
    categorical_baselearners, intercept, linear, product, smooth_deviation, spatial_surface, tensor_deviation,
    varying_coefficient, BaseLearner,
};
use crate::data::Frame;
use crate::error::{Error, Result};

/// The full occupancy/count formula over the standard survey covariates:
/// 48 base-learners.
pub const FULL_SURVEY_FORMULA: &str = "int + lin(time) + sm(time) + lin(SSTw) + sm(SSTw) \
    + lin(SSTm) + sm(SSTm) + lin(SSTrel) + sm(SSTrel) + by(lin(SSTrel), time) + sm(SSTrel, time) \
    + lin(SBT) + sm(SBT) + lin(NAOw) + lin(depth) + sm(depth) + by(lin(depth), time) + sm(depth, time) \
    + lin(d2land) + sm(d2land) + lin(chla) + sm(chla) + lin(cdom) + sm(cdom) + sm(cdom, chla) \
    + lin(meanphi) + sm(meanphi) + lin(SAR) + sm(SAR) + lin(tidebmean) + sm(tidebmean) \
    + lin(tidesd) + sm(tidesd) + lin(strat) + sm(strat) + cat(ferry) + cat(winter) \
    + spatial(xkm, ykm) + by(spatial(xkm, ykm), time) + lin(obs_window) + sm(obs_window)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Intercept,
    Lin(String),
    Product(String, String),
    Smooth(String),
    Surface(String, String),
    Cat(String),
    Spatial(String, String),
    By(Box<Term>, String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "int"),
            Term::Lin(a) => write!(f, "lin({a})"),
            Term::Product(a, b) => write!(f, "lin({a}, {b})"),
            Term::Smooth(a) => write!(f, "sm({a})"),
            Term::Surface(a, b) => write!(f, "sm({a}, {b})"),
            Term::Cat(a) => write!(f, "cat({a})"),
            Term::Spatial(a, b) => write!(f, "spatial({a}, {b})"),
            Term::By(t, b) => write!(f, "by({t}, {b})"),
        }
    }
}

impl Term {
    /// Covariates the term reads.
    pub fn covariates(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Lin(a) | Term::Smooth(a) | Term::Cat(a) => vec![a],
            Term::Product(a, b) | Term::Surface(a, b) | Term::Spatial(a, b) => vec![a, b],
            Term::By(t, b) => {
                let mut v = t.covariates();
                v.push(b);
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub terms: Vec<Term>,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            other => Err(Error::Formula(format!(
                "expected `{c}` at offset {}, found {}",
                self.pos,
                other.map_or("end of input".to_string(), |x| format!("`{x}`"))
            ))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|(_, c)| !(c.is_alphanumeric() || *c == '_' || *c == '.'))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(Error::Formula(format!("expected a name at offset {}", self.pos)));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn names(&mut self) -> Result<Vec<String>> {
        self.expect('(')?;
        let mut out = vec![self.ident()?];
        while self.peek() == Some(',') {
            self.pos += 1;
            out.push(self.ident()?);
        }
        self.expect(')')?;
        Ok(out)
    }

    fn term(&mut self) -> Result<Term> {
        let head = self.ident()?;
        if head == "int" {
            return Ok(Term::Intercept);
        }
        if head == "by" {
            self.expect('(')?;
            let inner = self.term()?;
            self.expect(',')?;
            let by = self.ident()?;
            self.expect(')')?;
            return Ok(Term::By(Box::new(inner), by));
        }
        let args = self.names()?;
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Formula(format!("`{head}` takes {n} argument(s), got {}", args.len())))
            }
        };
        match (head.as_str(), args.len()) {
            ("lin", 1) => Ok(Term::Lin(args[0].clone())),
            ("lin", 2) => Ok(Term::Product(args[0].clone(), args[1].clone())),
            ("sm", 1) => Ok(Term::Smooth(args[0].clone())),
            ("sm", 2) => Ok(Term::Surface(args[0].clone(), args[1].clone())),
            ("cat", _) => arity(1).map(|_| Term::Cat(args[0].clone())),
            ("spatial", _) => arity(2).map(|_| Term::Spatial(args[0].clone(), args[1].clone())),
            ("lin", _) | ("sm", _) => Err(Error::Formula(format!("`{head}` takes one or two arguments"))),
            _ => Err(Error::Formula(format!("unknown term `{head}`"))),
        }
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { src: s, pos: 0 };
        let mut terms = vec![p.term()?];
        while let Some(c) = p.peek() {
            if c != '+' {
                return Err(Error::Formula(format!("unexpected `{c}` at offset {}", p.pos)));
            }
            p.pos += 1;
            terms.push(p.term()?);
        }
        Ok(Formula { terms })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulaOptions {
    pub smooth: SplineConfig,
    pub surface: SplineConfig,
    pub target_df: f64,
}

impl Default for FormulaOptions {
    fn default() -> Self {
        Self { smooth: SplineConfig::default(), surface: SplineConfig::surface_default(), target_df: 1.0 }
    }
}

fn build_term(term: &Term, frame: &Frame, opts: &FormulaOptions) -> Result<Vec<BaseLearner>> {
    Ok(match term {
        Term::Intercept => vec![intercept(frame)?],
        Term::Lin(a) => vec![linear(frame, a)?],
        Term::Product(a, b) => vec![product(frame, a, b)?],
        Term::Smooth(a) => vec![smooth_deviation(frame, a, opts.smooth, opts.target_df)?],
        Term::Surface(a, b) => vec![tensor_deviation(frame, a, b, opts.surface, opts.target_df)?],
        Term::Cat(a) => categorical_baselearners(frame, a)?,
        Term::Spatial(a, b) => spatial_surface(frame, a, b, opts.surface, opts.target_df)?,
        Term::By(inner, by) => build_term(inner, frame, opts)?
            .iter()
            .map(|bl| varying_coefficient(bl, frame, by))
            .collect::<Result<_>>()?,
    })
}

impl Formula {
    /// Base-learners of every term, built and pinned on `frame`.
    pub fn build(&self, frame: &Frame, opts: &FormulaOptions) -> Result<Vec<BaseLearner>> {
        for term in &self.terms {
            for c in term.covariates() {
                if !frame.has(c) {
                    return Err(Error::Formula(format!("covariate `{c}` in `{term}` is not in the data")));
                }
            }
        }
        let mut out = Vec::new();
        let mut names = HashSet::new();
        for term in &self.terms {
            for bl in build_term(term, frame, opts)? {
                if !names.insert(bl.name.clone()) {
                    return Err(Error::Formula(format!("base-learner `{}` appears twice", bl.name)));
                }
                out.push(bl);
            }
        }
        Ok(out)
    }
}
