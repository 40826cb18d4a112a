//! Prompt assembly from a placeholder template, and demonstration-order
//! enumeration for permutation-sensitivity harnesses.

use crate::error::{Error, Result};

/// Built-in prompt template. `{task_description}`, `{examples}`, and
/// `{query}` are the three required placeholders; the examples block
/// expands to one `#Input:`/`#Response:` line pair per demonstration.
pub const DEFAULT_TEMPLATE: &str = "### Instruction:\n{task_description}\n\n### Examples:\n{examples}\n### Input:\n{query}\n\n### Response:\n";

const PLACEHOLDERS: [&str; 3] = ["task_description", "examples", "query"];

/// Render a prompt. Payload text is inserted verbatim: no escaping, no
/// trimming, and placeholder-like text inside a payload is left alone.
/// Demonstrations appear in the given order.
pub fn assemble_prompt(
    template: &str,
    task_description: &str,
    demos: &[(String, String)],
    query: &str,
) -> Result<String> {
    for name in PLACEHOLDERS {
        if !template.contains(&format!("{{{name}}}")) {
            return Err(Error::MissingPlaceholder { name: name.into() });
        }
    }
    let mut examples = String::new();
    for (input, label) in demos {
        examples.push_str("#Input: ");
        examples.push_str(input);
        examples.push_str("\n#Response: ");
        examples.push_str(label);
        examples.push('\n');
    }

    // single pass over the template so payloads are never rescanned
    let mut out = String::with_capacity(template.len() + examples.len() + query.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        let mut replaced = false;
        for name in PLACEHOLDERS {
            let token = format!("{{{name}}}");
            if after.starts_with(&token) {
                out.push_str(match name {
                    "task_description" => task_description,
                    "examples" => &examples,
                    _ => query,
                });
                rest = &after[token.len()..];
                replaced = true;
                break;
            }
        }
        if !replaced {
            out.push('{');
            rest = &after[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// All orderings of `items` in lexicographic position order. Refuses when
/// the factorial exceeds `limit`.
pub fn enumerate_permutations<T: Clone>(items: &[T], limit: u64) -> Result<Vec<Vec<T>>> {
    let mut count: u64 = 1;
    for i in 1..=items.len() as u64 {
        count = count.saturating_mul(i);
        if count > limit {
            return Err(Error::PermutationLimit { count, limit });
        }
    }
    let positions: Vec<usize> = (0..items.len()).collect();
    let mut orderings = Vec::with_capacity(count as usize);
    permute(&positions, &mut Vec::new(), &mut orderings);
    Ok(orderings
        .into_iter()
        .map(|perm| perm.into_iter().map(|p| items[p].clone()).collect())
        .collect())
}

fn permute(remaining: &[usize], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if remaining.is_empty() {
        out.push(prefix.clone());
        return;
    }
    for (i, &p) in remaining.iter().enumerate() {
        let mut rest = remaining.to_vec();
        rest.remove(i);
        prefix.push(p);
        permute(&rest, prefix, out);
        prefix.pop();
    }
}
