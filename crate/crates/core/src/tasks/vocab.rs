use std::fmt;

use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";

/// Which side of the mapping a vocabulary belongs to. Input and output
/// token ids live in separate index spaces, so the two vocabularies are
/// disjoint even when they display the same symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Input,
    Output,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Input => "input",
            Side::Output => "output",
        })
    }
}

/// Symbol table with the end-of-sequence marker at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    side: Side,
    symbols: Vec<String>,
}

impl Vocab {
    pub fn new(side: Side, symbols: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![EOS.to_string()];
        all.extend(symbols);
        Self { side, symbols: all }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eos(&self) -> usize {
        0
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Space-separated rendering of a token sequence.
    pub fn render(&self, tokens: &[usize]) -> String {
        tokens
            .iter()
            .map(|&t| self.symbol(t).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|s| {
                self.id(s)
                    .ok_or_else(|| Error::Task(format!("unknown {} symbol {s:?}", self.side)))
            })
            .collect()
    }

    pub fn check(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.len()) {
            Some(&token) => Err(Error::Token {
                token,
                side: match self.side {
                    Side::Input => "input",
                    Side::Output => "output",
                },
                size: self.len(),
            }),
            None => Ok(()),
        }
    }
}
