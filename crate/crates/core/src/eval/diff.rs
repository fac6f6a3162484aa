use std::collections::BTreeSet;

use super::EvalError;

/// (file, pre-image line)
pub type LineSet = BTreeSet<(String, u32)>;

fn strip_prefix(path: &str) -> &str {
    let path = path.split('\t').next().unwrap_or(path).trim();
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
}

fn parse_range(s: &str, sign: char) -> Option<(u32, u32)> {
    let s = s.strip_prefix(sign)?;
    let (start, len) = match s.split_once(',') {
        Some((a, b)) => (a.parse().ok()?, b.parse().ok()?),
        None => (s.parse().ok()?, 1),
    };
    Some((start, len))
}

fn hunk_header(line: &str) -> Option<((u32, u32), (u32, u32))> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut parts = rest[..end].split_whitespace();
    let old = parse_range(parts.next()?, '-')?;
    let new = parse_range(parts.next()?, '+')?;
    Some((old, new))
}

/// Pre-image lines touched by a unified diff. Removed lines count directly;
/// a run of added lines with no removal beside it counts the pre-image line
/// it follows (or the hunk's first line when it opens the hunk).
pub fn ground_truth_lines(diff_text: &str) -> Result<LineSet, EvalError> {
    let mut out = LineSet::new();
    let mut old_file: Option<String> = None;
    let mut file: Option<String> = None;
    let mut lines = diff_text.lines().enumerate();
    while let Some((n, line)) = lines.next() {
        if let Some(p) = line.strip_prefix("--- ") {
            old_file = Some(strip_prefix(p).to_string());
            continue;
        }
        if let Some(p) = line.strip_prefix("+++ ") {
            let new = strip_prefix(p).to_string();
            file = match old_file.take() {
                Some(old) if old != "/dev/null" => Some(old),
                _ => Some(new),
            };
            continue;
        }
        if !line.starts_with("@@") {
            continue;
        }
        let ((old_start, old_len), (_, new_len)) = hunk_header(line)
            .ok_or_else(|| EvalError::MalformedDiff(format!("line {}: bad hunk header", n + 1)))?;
        let file = file
            .clone()
            .ok_or_else(|| EvalError::MalformedDiff(format!("line {}: hunk before file header", n + 1)))?;
        let (mut old_rem, mut new_rem) = (old_len, new_len);
        let mut cur = old_start;
        let mut block_removed = false;
        let mut block_anchored = false;
        while old_rem > 0 || new_rem > 0 {
            let Some((m, body)) = lines.next() else {
                return Err(EvalError::MalformedDiff("hunk truncated".into()));
            };
            match body.chars().next() {
                Some(' ') | None => {
                    if old_rem == 0 || new_rem == 0 {
                        return Err(EvalError::MalformedDiff(format!("line {}: hunk overrun", m + 1)));
                    }
                    cur += 1;
                    old_rem -= 1;
                    new_rem -= 1;
                    block_removed = false;
                    block_anchored = false;
                }
                Some('-') => {
                    if old_rem == 0 {
                        return Err(EvalError::MalformedDiff(format!("line {}: hunk overrun", m + 1)));
                    }
                    out.insert((file.clone(), cur));
                    cur += 1;
                    old_rem -= 1;
                    block_removed = true;
                }
                Some('+') => {
                    if new_rem == 0 {
                        return Err(EvalError::MalformedDiff(format!("line {}: hunk overrun", m + 1)));
                    }
                    new_rem -= 1;
                    let followed_by_removal = lines
                        .clone()
                        .map(|(_, l)| l)
                        .find(|l| !l.starts_with('+'))
                        .is_some_and(|l| l.starts_with('-'));
                    if !block_removed && !block_anchored && !followed_by_removal {
                        let anchor = if cur > old_start { cur - 1 } else { old_start };
                        if anchor > 0 {
                            out.insert((file.clone(), anchor));
                        }
                        block_anchored = true;
                    }
                }
                Some('\\') => {}
                Some(_) => {
                    return Err(EvalError::MalformedDiff(format!(
                        "line {}: unexpected hunk line",
                        m + 1
                    )))
                }
            }
        }
    }
    Ok(out)
}
