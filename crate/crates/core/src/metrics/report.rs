use std::fmt::Write as _;

use serde::Deserialize;

/// All metrics for one clustering. `acc`, `nmi` and `f_beta` are absent when
/// no ground truth was supplied.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub bal: f64,
    pub mnce: f64,
    pub f_beta: Option<f64>,
    /// `I(G;C)` of the one-hot assignment.
    pub mi_gc: f64,
    /// `I(X;C|G)` estimate of the one-hot assignment.
    pub cmi_xcg: f64,
    pub n: usize,
    pub k: usize,
    pub t: usize,
}

/// Six-decimal fixed notation, without a negative sign on zero.
pub(crate) fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), fixed6)
}

impl MetricsReport {
    /// Serializes with a fixed key order and six decimals per real, so equal
    /// reports are byte-identical.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\n");
        let fields = [
            ("acc", opt(self.acc)),
            ("nmi", opt(self.nmi)),
            ("bal", fixed6(self.bal)),
            ("mnce", fixed6(self.mnce)),
            ("f_beta", opt(self.f_beta)),
            ("mi_gc", fixed6(self.mi_gc)),
            ("cmi_xcg", fixed6(self.cmi_xcg)),
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
            ("t", self.t.to_string()),
        ];
        let last = fields.len() - 1;
        for (i, (key, value)) in fields.iter().enumerate() {
            let sep = if i == last { "" } else { "," };
            writeln!(s, "  \"{key}\": {value}{sep}").expect("write to string");
        }
        s.push_str("}\n");
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
