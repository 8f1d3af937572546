//! Plain-text graph format: a header line `n m`, then `m` lines `u v` with
//! `0 <= u < v < n`. Lines starting with `#` and blank lines are ignored.

use std::io::{BufRead, Write};

use super::Graph;
use crate::error::{Error, Result};

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(Error::Io(e))),
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
    })
}

fn two_numbers(line: usize, text: &str) -> Result<(u64, u64)> {
    let mut it = text.split_whitespace();
    let mut next = || -> Result<u64> {
        it.next()
            .ok_or_else(|| Error::Parse {
                line,
                reason: "expected two integers".into(),
            })?
            .parse()
            .map_err(|e| Error::Parse {
                line,
                reason: format!("{e}"),
            })
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(Error::Parse {
            line,
            reason: "trailing tokens".into(),
        });
    }
    Ok((a, b))
}

/// Parses one `u v` line of an edge stream. Comment and blank lines give `None`.
pub fn parse_edge_line(line_no: usize, line: &str) -> Option<Result<(u64, u64)>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        None
    } else {
        Some(two_numbers(line_no, t))
    }
}

pub fn read_graph<R: BufRead>(reader: R) -> Result<Graph> {
    let mut lines = content_lines(reader);
    let (hline, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 0,
        reason: "missing `n m` header".into(),
    })??;
    let (n, m) = two_numbers(hline, &header)?;
    let (n, m) = (n as usize, m as usize);
    let mut g = Graph::empty(n);
    let mut seen = 0;
    for item in lines {
        let (line, text) = item?;
        let (u, v) = two_numbers(line, &text)?;
        let (u, v) = (u as usize, v as usize);
        if !(u < v && v < n) {
            return Err(Error::Parse {
                line,
                reason: format!("edge `{u} {v}` must satisfy 0 <= u < v < {n}"),
            });
        }
        g.add_edge(u, v).map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        seen += 1;
    }
    if seen != m {
        return Err(Error::Parse {
            line: hline,
            reason: format!("header promises {m} edges, found {seen}"),
        });
    }
    Ok(g)
}

pub fn write_graph<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", g.n(), g.edge_count())?;
    for (u, v) in g.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}
