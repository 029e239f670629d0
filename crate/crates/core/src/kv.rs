//! Line-oriented `key = value` files with `[section]` headers and `#` comments.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Entry {
    Section(String),
    Pair { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Line {
    pub number: usize,
    pub entry: Entry,
}

pub(crate) fn lines(text: &str) -> Result<Vec<Line>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let entry = if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(number, None, "unterminated section header"))?;
            Entry::Section(name.trim().to_string())
        } else if let Some((k, v)) = line.split_once('=') {
            Entry::Pair {
                key: k.trim().to_string(),
                value: v.trim().to_string(),
            }
        } else if line == "component" {
            // bare block keyword, same as `[component]`
            Entry::Section(line.to_string())
        } else {
            return Err(err(number, None, &format!("expected `key = value`, found `{line}`")));
        };
        out.push(Line { number, entry });
    }
    Ok(out)
}

pub(crate) fn err(line: usize, key: Option<&str>, msg: &str) -> Error {
    Error::Parse {
        line,
        key: key.map(str::to_string),
        msg: msg.to_string(),
    }
}

pub(crate) fn parse_scalar<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| err(line, Some(key), &format!("cannot parse `{value}`")))
}

pub(crate) fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar(line, key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(err(line, Some(key), "empty list"));
    }
    Ok(items)
}

/// A comma list of `dim` reals, or a single scalar broadcast to `dim`.
pub(crate) fn parse_broadcast(line: usize, key: &str, value: &str, dim: usize) -> Result<Vec<f64>> {
    let items: Vec<f64> = parse_list(line, key, value)?;
    match items.len() {
        1 => Ok(vec![items[0]; dim]),
        n if n == dim => Ok(items),
        n => Err(err(
            line,
            Some(key),
            &format!("expected 1 or {dim} values, found {n}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_sections_pairs_and_comments() {
        let text = "# header\ndim = 3\n\n[component]\nweight=0.5 # trailing\ncomponent\n";
        let ls = lines(text).unwrap();
        assert_eq!(ls.len(), 4);
        assert_eq!(ls[0].number, 2);
        assert_eq!(
            ls[2].entry,
            Entry::Pair {
                key: "weight".into(),
                value: "0.5".into()
            }
        );
        assert_eq!(ls[3].entry, Entry::Section("component".into()));
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(parse_broadcast(1, "mean", "8", 3).unwrap(), vec![8.0; 3]);
        assert_eq!(parse_broadcast(1, "mean", "1, 2,3", 3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_broadcast(1, "mean", "1,2", 3).is_err());
        assert!(lines("garbage").is_err());
    }
}
