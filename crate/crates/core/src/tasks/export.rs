//! One-example-per-line text format: input tokens, a tab, output tokens,
//! with tokens separated by single spaces.

use std::io::Write;

use super::{Example, TaskData, Vocab};
use crate::error::{Error, Result};

pub fn format_example(example: &Example, input_vocab: &Vocab, output_vocab: &Vocab) -> String {
    format!(
        "{}\t{}",
        input_vocab.render(&example.input),
        output_vocab.render(&example.output)
    )
}

pub fn parse_example(line: &str, input_vocab: &Vocab, output_vocab: &Vocab) -> Result<Example> {
    let (x, y) = line
        .split_once('\t')
        .ok_or_else(|| Error::Task(format!("missing tab in {line:?}")))?;
    Ok(Example {
        input: input_vocab.parse(x)?,
        output: output_vocab.parse(y)?,
    })
}

/// Writes the train set, the holdout inputs and every rule's labelled
/// holdout as `#`-headed sections.
pub fn write_dump(data: &TaskData, mut out: impl Write) -> Result<()> {
    let (iv, ov) = (&data.input_vocab, &data.output_vocab);
    writeln!(out, "# task {}", data.instance)?;
    writeln!(out, "# train")?;
    for ex in &data.train {
        writeln!(out, "{}", format_example(ex, iv, ov))?;
    }
    writeln!(out, "# holdout")?;
    for x in &data.holdout {
        writeln!(out, "{}", iv.render(x))?;
    }
    for rule in data.instance.rules() {
        writeln!(out, "# rule {rule}")?;
        for (_, ex) in data.labeled_holdout(rule)? {
            writeln!(out, "{}", format_example(&ex, iv, ov))?;
        }
        for i in data.flagged_holdout(rule) {
            writeln!(out, "# inapplicable: {}", iv.render(&data.holdout[i]))?;
        }
    }
    Ok(())
}
