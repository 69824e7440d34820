//! Line-based text format:
//!
//! ```text
//! mdp <n_states> <gamma>
//! t <s> <a> <s'> <p>
//! r <s> <a> <value>
//! p0 <s> <p>
//! terminal <s>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Actions come into
//! existence the first time a `t` or `r` line mentions them.

use super::{MdpBuilder, TabularMdp};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::str::FromStr;

impl TabularMdp {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "mdp {} {}", self.n_states(), self.gamma).unwrap();
        for s in 0..self.n_states() {
            for (i, &a) in self.actions[s].iter().enumerate() {
                for &(next, p) in &self.transitions[s][i] {
                    writeln!(out, "t {s} {a} {next} {p}").unwrap();
                }
                writeln!(out, "r {s} {a} {}", self.rewards[s][i]).unwrap();
            }
        }
        for (s, p) in self.initial.iter().enumerate() {
            if *p != 0.0 {
                writeln!(out, "p0 {s} {p}").unwrap();
            }
        }
        for s in self.terminal_states() {
            writeln!(out, "terminal {s}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut builder: Option<MdpBuilder> = None;
        let mut initial: Option<Vec<f64>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let line_no = lineno + 1;
            let err = |msg: &str| Error::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            if fields[0] == "mdp" {
                if fields.len() != 3 || builder.is_some() {
                    return Err(err("expected a single `mdp <n_states> <gamma>` header"));
                }
                let n: usize = parse(fields[1], line_no)?;
                let gamma: f64 = parse(fields[2], line_no)?;
                builder = Some(MdpBuilder::new(n, gamma));
                initial = Some(vec![0.0; n]);
                continue;
            }
            let b = builder
                .as_mut()
                .ok_or_else(|| err("missing `mdp` header"))?;
            let n = b.actions.len();
            let state = |f: &str| -> Result<usize> {
                let s: usize = parse(f, line_no)?;
                if s >= n {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("state {s} out of range"),
                    });
                }
                Ok(s)
            };
            match (fields[0], fields.len()) {
                ("t", 5) => {
                    let s = state(fields[1])?;
                    let a: usize = parse(fields[2], line_no)?;
                    let next = state(fields[3])?;
                    let p: f64 = parse(fields[4], line_no)?;
                    b.add_transition(s, a, next, p);
                }
                ("r", 4) => {
                    let s = state(fields[1])?;
                    let a: usize = parse(fields[2], line_no)?;
                    let r: f64 = parse(fields[3], line_no)?;
                    b.set_reward(s, a, r);
                }
                ("p0", 3) => {
                    let s = state(fields[1])?;
                    let p: f64 = parse(fields[2], line_no)?;
                    initial.as_mut().expect("header seen")[s] = p;
                }
                ("terminal", 2) => {
                    let s = state(fields[1])?;
                    b.terminal(s);
                }
                _ => return Err(err(&format!("unrecognised line `{line}`"))),
            }
        }
        let mut b = builder.ok_or(Error::Parse {
            line: 0,
            msg: "empty input".into(),
        })?;
        let initial = initial.expect("header seen");
        if initial.iter().any(|p| *p != 0.0) {
            b.initial(initial);
        }
        b.build()
    }
}

fn parse<T: FromStr>(field: &str, line: usize) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{field}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut b = MdpBuilder::new(3, 0.95);
        b.action(0, 0, -1.0, vec![(1, 0.25), (2, 0.75)])
            .action(0, 3, 0.5, vec![(0, 1.0)])
            .action(1, 1, 0.1, vec![(2, 1.0)])
            .action(2, 0, 0.0, vec![(2, 1.0)])
            .terminal(2)
            .initial(vec![0.3, 0.7, 0.0]);
        let mdp = b.build().unwrap();
        let parsed = TabularMdp::from_text(&mdp.to_text()).unwrap();
        assert_eq!(parsed, mdp);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "mdp 2 0.9\nt 0 0 1 1\nbogus\n";
        match TabularMdp::from_text(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(TabularMdp::from_text("t 0 0 0 1\n").is_err());
        assert!(TabularMdp::from_text("mdp 1 0.9\nt 0 0 5 1\n").is_err());
    }
}
