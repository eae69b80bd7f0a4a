//! Serializable run reports.
//!
//! A [`RunReport`] is a flat, schema-tagged snapshot of everything one tool
//! invocation computed: the constants table, any radius conditions that were
//! checked, a multiplicity verdict, and solve summaries. Nothing here is
//! recomputed; every number is copied out of a result struct produced by the
//! `constants`, `index`, or `solver` module, so a report can be audited
//! against those APIs field by field.
//!
//! Serialization is deterministic. Regenerating a report from the same
//! problem file and the same requests yields identical bytes except for
//! `wall_time_ms`, which is the one field excluded from [`RunReport::finalize`]'s
//! content digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::TheoryConstants;
use crate::index::{BoxExtremum, MultiplicityVerdict, RhoCondition};
use crate::scalar::Scalar;
use crate::solver::SolveResult;

/// Schema tag stamped into every report.
pub const SCHEMA: &str = "report.v1";

/// A scalar rendered for serialization: a shortest-round-trip float always,
/// plus the exact rational form whenever the computation stayed on the exact
/// track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportNumber {
    pub approx: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<String>,
}

impl From<&Scalar> for ReportNumber {
    fn from(s: &Scalar) -> Self {
        ReportNumber {
            approx: s.to_f64(),
            exact: match s {
                Scalar::Exact(_) => Some(s.to_string()),
                Scalar::Float(_) => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

// ---------------------------------------------------------------------------
// constants

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationConstantsReport {
    pub c_kernel: ReportNumber,
    pub tilde_c: ReportNumber,
    pub m: ReportNumber,
    pub m_big: ReportNumber,
    pub d: ReportNumber,
    pub d_under: ReportNumber,
    pub theta: [ReportNumber; 4],
    pub theta_under: [ReportNumber; 4],
    pub q: ReportNumber,
    pub s: ReportNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConstantsReport {
    pub gamma_sup: ReportNumber,
    pub c_gamma: ReportNumber,
    pub beta_gamma: [ReportNumber; 2],
    pub delta_one: ReportNumber,
    pub kernel_functional_full: ReportNumber,
    pub kernel_functional_ab: ReportNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub per_equation: [EquationConstantsReport; 2],
    pub per_term: [[TermConstantsReport; 2]; 2],
    pub c: ReportNumber,
}

impl From<&TheoryConstants> for ConstantsReport {
    fn from(k: &TheoryConstants) -> Self {
        let eq = |e: &crate::constants::PerEquation| EquationConstantsReport {
            c_kernel: (&e.c_kernel).into(),
            tilde_c: (&e.tilde_c).into(),
            m: (&e.m).into(),
            m_big: (&e.m_big).into(),
            d: (&e.d).into(),
            d_under: (&e.d_under).into(),
            theta: std::array::from_fn(|t| (&e.theta[t]).into()),
            theta_under: std::array::from_fn(|t| (&e.theta_under[t]).into()),
            q: (&e.q).into(),
            s: (&e.s).into(),
        };
        let term = |t: &crate::constants::PerTerm| TermConstantsReport {
            gamma_sup: (&t.gamma_sup).into(),
            c_gamma: (&t.c_gamma).into(),
            beta_gamma: std::array::from_fn(|l| (&t.beta_gamma[l]).into()),
            delta_one: (&t.delta_one).into(),
            kernel_functional_full: (&t.kernel_functional_full).into(),
            kernel_functional_ab: (&t.kernel_functional_ab).into(),
        };
        ConstantsReport {
            per_equation: std::array::from_fn(|i| eq(&k.per_equation[i])),
            per_term: std::array::from_fn(|i| std::array::from_fn(|j| term(&k.per_term[i][j]))),
            c: (&k.c).into(),
        }
    }
}

// ---------------------------------------------------------------------------
// conditions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumReport {
    /// Equation index, 0-based.
    pub equation: usize,
    /// "sup" or "inf".
    pub mode: String,
    pub t: [ReportNumber; 2],
    pub u: [ReportNumber; 2],
    pub v: [ReportNumber; 2],
    /// Extremum of f_i/rho.
    pub value: ReportNumber,
    /// Extremum of f_i before dividing by rho.
    pub raw: ReportNumber,
    /// "sampled" or "user-exact".
    pub source: String,
    pub grid: usize,
    pub refinements: usize,
}

impl From<&BoxExtremum> for ExtremumReport {
    fn from(x: &BoxExtremum) -> Self {
        ExtremumReport {
            equation: x.i,
            mode: x.mode.to_string(),
            t: [(&x.search_box.t.0).into(), (&x.search_box.t.1).into()],
            u: [(&x.search_box.u.0).into(), (&x.search_box.u.1).into()],
            v: [(&x.search_box.v.0).into(), (&x.search_box.v.1).into()],
            value: (&x.value).into(),
            raw: (&x.raw).into(),
            source: x.source.to_string(),
            grid: x.grid,
            refinements: x.refinements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationCheckReport {
    pub lhs: ReportNumber,
    pub threshold: ReportNumber,
    pub f_extremum: ExtremumReport,
    pub satisfied: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// "index1", "index0", or "index0_star".
    pub kind: String,
    pub rho: ReportNumber,
    pub per_equation: [EquationCheckReport; 2],
    pub satisfied: bool,
    pub margin: f64,
}

impl From<&RhoCondition> for ConditionReport {
    fn from(c: &RhoCondition) -> Self {
        ConditionReport {
            kind: c.kind.to_string(),
            rho: (&c.rho).into(),
            per_equation: std::array::from_fn(|i| {
                let e = &c.per_equation[i];
                EquationCheckReport {
                    lhs: (&e.lhs).into(),
                    threshold: (&e.threshold).into(),
                    f_extremum: (&e.f_extremum).into(),
                    satisfied: e.satisfied,
                    margin: e.margin,
                }
            }),
            satisfied: c.satisfied,
            margin: c.margin,
        }
    }
}

// ---------------------------------------------------------------------------
// verdict

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntryReport {
    pub rho: ReportNumber,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCheckReport {
    pub constraint: String,
    pub lhs: ReportNumber,
    pub rhs: ReportNumber,
    pub satisfied: bool,
}

/// The ladder-level outcome. The per-rung conditions live in the report's
/// flat `conditions` list, in ladder order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub clause: String,
    pub ladder: Vec<LadderEntryReport>,
    pub gap_checks: Vec<GapCheckReport>,
    pub established: bool,
    pub guaranteed_count: usize,
}

impl From<&MultiplicityVerdict> for VerdictReport {
    fn from(v: &MultiplicityVerdict) -> Self {
        VerdictReport {
            clause: v.clause.to_string(),
            ladder: v
                .ladder
                .iter()
                .map(|e| LadderEntryReport {
                    rho: (&e.rho).into(),
                    kind: e.kind.to_string(),
                })
                .collect(),
            gap_checks: v
                .gap_checks
                .iter()
                .map(|g| GapCheckReport {
                    constraint: g.constraint.clone(),
                    lhs: (&g.lhs).into(),
                    rhs: (&g.rhs).into(),
                    satisfied: g.satisfied,
                })
                .collect(),
            established: v.established,
            guaranteed_count: v.guaranteed_count,
        }
    }
}

// ---------------------------------------------------------------------------
// solves

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub nodes: usize,
    pub norm: f64,
    /// sup over nodes of |x - T(x)|.
    pub residual: f64,
    /// Residual probed between nodes as well; the honest accuracy figure.
    pub residual_probed: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_cone: [bool; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bracket: Option<[f64; 2]>,
    /// File the sampled solution was written to, when one was.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub csv: Option<String>,
}

impl SolveReport {
    pub fn new(r: &SolveResult, csv: Option<String>) -> Self {
        SolveReport {
            nodes: r.u.nodes().len(),
            norm: r.norm,
            residual: r.residual,
            residual_probed: r.residual_probed,
            iterations: r.iterations,
            converged: r.converged,
            in_cone: r.in_cone,
            bracket: r.bracket.map(|(lo, hi)| [lo, hi]),
            csv,
        }
    }
}

// ---------------------------------------------------------------------------
// the report itself

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub tool: ToolInfo,
    /// SHA-256 of the problem file bytes.
    pub problem_digest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub constants: Option<ConstantsReport>,
    pub conditions: Vec<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<VerdictReport>,
    pub solves: Vec<SolveReport>,
    /// SHA-256 of this report serialized with `content_digest` empty and
    /// `wall_time_ms` removed. Set by [`RunReport::finalize`].
    pub content_digest: String,
    /// Milliseconds of wall time. The only field the digest ignores, so two
    /// runs over the same inputs agree on everything but this.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_ms: Option<f64>,
}

impl RunReport {
    pub fn new(problem_digest: &str) -> Self {
        RunReport {
            schema: SCHEMA.to_string(),
            tool: ToolInfo {
                name: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            problem_digest: problem_digest.to_string(),
            constants: None,
            conditions: Vec::new(),
            verdict: None,
            solves: Vec::new(),
            content_digest: String::new(),
            wall_time_ms: None,
        }
    }

    pub fn set_constants(&mut self, k: &TheoryConstants) {
        self.constants = Some(k.into());
    }

    pub fn push_condition(&mut self, c: &RhoCondition) {
        self.conditions.push(c.into());
    }

    /// Record a verdict; its per-rung conditions are appended to the flat
    /// `conditions` list rather than nested.
    pub fn set_verdict(&mut self, v: &MultiplicityVerdict) {
        for c in &v.conditions {
            self.push_condition(c);
        }
        self.verdict = Some(v.into());
    }

    pub fn push_solve(&mut self, r: &SolveResult, csv: Option<String>) {
        self.solves.push(SolveReport::new(r, csv));
    }

    fn digest_bytes(&self) -> Vec<u8> {
        let mut canon = self.clone();
        canon.content_digest = String::new();
        canon.wall_time_ms = None;
        serde_json::to_vec(&canon).expect("report serialization cannot fail")
    }

    /// Compute and store the content digest. Idempotent.
    pub fn finalize(&mut self) {
        let bytes = self.digest_bytes();
        self.content_digest = hex(&Sha256::digest(&bytes));
    }

    /// True when the stored digest matches the current contents.
    pub fn digest_ok(&self) -> bool {
        hex(&Sha256::digest(&self.digest_bytes())) == self.content_digest
    }

    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::compute_all;
    use crate::index::{self, ConditionKind, LadderEntry};
    use crate::problem::ProblemDef;
    use std::sync::OnceLock;

    fn example() -> &'static (ProblemDef, TheoryConstants) {
        static CELL: OnceLock<(ProblemDef, TheoryConstants)> = OnceLock::new();
        CELL.get_or_init(|| {
            let path = concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../problems/example.problem"
            );
            let p = ProblemDef::load(path).unwrap();
            let k = compute_all(&p).unwrap();
            (p, k)
        })
    }

    fn ladder() -> Vec<LadderEntry> {
        vec![
            LadderEntry {
                rho: Scalar::ratio(1, 8),
                kind: ConditionKind::Index0Star,
            },
            LadderEntry {
                rho: Scalar::from_int(1),
                kind: ConditionKind::Index1,
            },
            LadderEntry {
                rho: Scalar::from_int(11),
                kind: ConditionKind::Index0,
            },
        ]
    }

    fn certify_report(wall: f64) -> RunReport {
        let (p, k) = example();
        let v = index::multiplicity(p, k, &ladder()).unwrap();
        let mut rep = RunReport::new(&p.digest);
        rep.set_constants(k);
        rep.set_verdict(&v);
        rep.wall_time_ms = Some(wall);
        rep.finalize();
        rep
    }

    #[test]
    fn exact_forms_survive_serialization() {
        let (_, k) = example();
        let rep: ConstantsReport = k.into();
        assert_eq!(rep.per_equation[0].m.exact.as_deref(), Some("8"));
        assert_eq!(rep.per_equation[0].m.approx, 8.0);
        assert_eq!(rep.per_equation[0].theta[0].exact.as_deref(), Some("18/11"));
        assert_eq!(rep.c.exact.as_deref(), Some("1/4"));
        // the one genuinely irrational constant stays float-only
        assert_eq!(rep.per_term[1][1].c_gamma.exact, None);
        assert!((rep.per_term[1][1].c_gamma.approx - 0.608_924_4).abs() < 1e-6);
    }

    #[test]
    fn regeneration_is_identical_except_wall_time() {
        let a = certify_report(12.5);
        let b = certify_report(99.0);
        assert_eq!(a.content_digest, b.content_digest);
        assert_ne!(a.to_json(), b.to_json());
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.wall_time_ms = None;
        b2.wall_time_ms = None;
        assert_eq!(a2.to_json(), b2.to_json());
        assert!(a.digest_ok() && b.digest_ok());
    }

    #[test]
    fn round_trips_through_json() {
        let rep = certify_report(3.0);
        let back = RunReport::from_json(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
        assert!(back.digest_ok());
        assert_eq!(back.schema, SCHEMA);
        assert_eq!(back.tool.name, "conekit");
        assert_eq!(back.conditions.len(), 3);
        assert_eq!(back.verdict.as_ref().unwrap().clause, "S3");
        assert_eq!(back.verdict.as_ref().unwrap().guaranteed_count, 2);
        assert_eq!(back.conditions[0].kind, "index0_star");
        assert_eq!(
            back.conditions[1].per_equation[0].lhs.exact.as_deref(),
            Some("4177/5280")
        );
    }

    #[test]
    fn tampering_breaks_the_digest() {
        let mut rep = certify_report(3.0);
        rep.conditions[0].margin += 1e-9;
        assert!(!rep.digest_ok());
        rep.finalize();
        assert!(rep.digest_ok());
    }

    #[test]
    fn solve_summary_copies_the_result() {
        use crate::solver::{picard, GridFunction, Operator, PicardOptions};
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../problems/linear_toy.problem"
        );
        let p = ProblemDef::load(path).unwrap();
        let k = compute_all(&p).unwrap();
        let op = Operator::new(&p, &k, 33).unwrap();
        let zero = GridFunction::constant(op.nodes(), 0.0);
        let opts = PicardOptions {
            damping: 1.0,
            ..PicardOptions::from_problem(&p)
        };
        let r = picard(&op, (zero.clone(), zero), &opts).unwrap();
        let mut rep = RunReport::new(&p.digest);
        rep.push_solve(&r, Some("solution_1.csv".into()));
        rep.finalize();
        let s = &rep.solves[0];
        assert_eq!(s.nodes, r.u.nodes().len());
        assert!(s.converged && s.in_cone == [true, true]);
        assert_eq!(s.residual, r.residual);
        assert_eq!(s.csv.as_deref(), Some("solution_1.csv"));
        assert!(rep.digest_ok());
    }
}
