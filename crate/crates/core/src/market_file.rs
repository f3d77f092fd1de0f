//! Plain-text market files.
//!
//! ```text
//! agents <n> firms <m>
//! <m agent utilities>      # one line per agent, n lines
//! <n firm utilities>       # one line per firm, m lines
//! ```
//!
//! Values are whitespace-separated reals. Blank lines and text after `#`
//! are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::market::Market;

pub fn parse_market(text: &str) -> Result<Market> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty market file".into(),
    })?;
    let words: Vec<&str> = header.split_whitespace().collect();
    let (n, m) = match words.as_slice() {
        ["agents", n, "firms", m] => (parse_count(n, line)?, parse_count(m, line)?),
        _ => {
            return Err(Error::Parse {
                line,
                msg: format!("expected `agents <n> firms <m>`, got `{header}`"),
            })
        }
    };

    let mut read_rows = |rows: usize, len: usize, side: &str| -> Result<Vec<Vec<f64>>> {
        (0..rows)
            .map(|i| {
                let (line, text) = lines.next().ok_or(Error::Parse {
                    line: 0,
                    msg: format!("missing utility row for {side} {i}"),
                })?;
                let row = text
                    .split_whitespace()
                    .map(|w| {
                        w.parse::<f64>().map_err(|_| Error::Parse {
                            line,
                            msg: format!("`{w}` is not a number"),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if row.len() != len {
                    return Err(Error::Parse {
                        line,
                        msg: format!("{side} {i}: expected {len} values, found {}", row.len()),
                    });
                }
                Ok(row)
            })
            .collect()
    };
    let agent_util = read_rows(n, m, "agent")?;
    let firm_util = read_rows(m, n, "firm")?;
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse {
            line,
            msg: "unexpected trailing content".into(),
        });
    }
    Market::new(agent_util, firm_util)
}

fn parse_count(word: &str, line: usize) -> Result<usize> {
    word.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{word}` is not a count"),
    })
}

pub fn format_market(market: &Market) -> String {
    let mut out = format!("agents {} firms {}\n", market.n_agents(), market.n_firms());
    for row in market.agent_util_rows().iter().chain(market.firm_util_rows()) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

pub fn read_market(path: &Path) -> Result<Market> {
    parse_market(&std::fs::read_to_string(path)?)
}
