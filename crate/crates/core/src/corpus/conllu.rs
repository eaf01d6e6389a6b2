//! CoNLL-U reading and writing.
//!
//! Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped; the
//! remaining ten columns are kept so that writing a loaded file reproduces
//! its forms, heads and labels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CorpusError, DepTree, Result, Token};

pub fn load_conllu(path: &Path) -> Result<Vec<DepTree>> {
    parse_conllu(&fs::read_to_string(path)?)
}

pub fn parse_conllu(text: &str) -> Result<Vec<DepTree>> {
    let mut trees = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                trees.push(parse_block(&block, trees.len())?);
                block.clear();
            }
        } else {
            block.push((k + 1, line));
        }
    }
    if !block.is_empty() {
        trees.push(parse_block(&block, trees.len())?);
    }
    Ok(trees)
}

fn parse_block(lines: &[(usize, &str)], ordinal: usize) -> Result<DepTree> {
    let mut comments = Vec::new();
    let mut rows: Vec<(usize, Token, usize, String)> = Vec::new();
    for &(lineno, line) in lines {
        if line.starts_with('#') {
            comments.push(line.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains(['-', '.']) {
            continue;
        }
        let num = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| CorpusError::Parse {
                line: lineno,
                msg: format!("bad {what} {s:?}"),
            })
        };
        let id = num(cols[0], "ID")?;
        let head = num(cols[6], "HEAD")?;
        let token = Token {
            index: id,
            form: cols[1].to_string(),
            lemma: (cols[2] != "_").then(|| cols[2].to_string()),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
        };
        rows.push((lineno, token, head, cols[7].to_string()));
    }
    let name = comments
        .iter()
        .find_map(|c| c.strip_prefix("# sent_id = "))
        .map_or_else(|| format!("#{ordinal}"), |s| s.trim().to_string());
    let structural = |msg: String| CorpusError::Structural {
        sentence: name.clone(),
        msg,
    };
    for w in 0..rows.len() {
        for v in 0..w {
            if rows[v].1.index == rows[w].1.index {
                return Err(structural(format!(
                    "token {} has two head rows (lines {} and {})",
                    rows[w].1.index, rows[v].0, rows[w].0
                )));
            }
        }
    }
    rows.sort_by_key(|r| r.1.index);
    let mut tokens = Vec::with_capacity(rows.len());
    let mut heads = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (_, tok, head, label) in rows {
        tokens.push(tok);
        heads.push(head);
        labels.push(label);
    }
    DepTree::new(tokens, heads, labels)
        .map(|t| t.with_comments(comments))
        .map_err(|e| match e {
            CorpusError::Structural { msg, .. } => structural(msg),
            other => other,
        })
}

pub fn write_conllu_string(trees: &[DepTree]) -> String {
    let mut out = String::new();
    for tree in trees {
        for c in tree.comments() {
            out.push_str(c);
            out.push('\n');
        }
        for tok in tree.tokens() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                tok.index,
                tok.form,
                tok.lemma.as_deref().unwrap_or("_"),
                tok.upos,
                tok.xpos,
                tok.feats,
                tree.head(tok.index),
                tree.label(tok.index),
                tok.deps,
                tok.misc
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_conllu(trees: &[DepTree], path: &Path) -> Result<()> {
    fs::write(path, write_conllu_string(trees))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str =
        "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n2\tfood\tfood\tNOUN\t_\t_\t0\troot\t_\t_\n";

    #[test]
    fn two_token_block() {
        let trees = parse_conllu(TWO).unwrap();
        assert_eq!(trees.len(), 1);
        let arcs: Vec<_> = trees[0]
            .arcs()
            .map(|a| (a.head, a.dependent, a.label))
            .collect();
        assert_eq!(arcs, vec![(2, 1, "det".into()), (0, 2, "root".into())]);
        assert_eq!(trees[0].forms(), vec!["the", "food"]);
    }

    #[test]
    fn empty_file() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_token_row_is_structural() {
        let text =
            "# sent_id = s7\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\
                    3\tc\t_\tX\t_\t_\t1\tdep\t_\t_\n3\tc\t_\tX\t_\t_\t2\tdep\t_\t_\n";
        match parse_conllu(text) {
            Err(CorpusError::Structural { sentence, msg }) => {
                assert_eq!(sentence, "s7");
                assert!(msg.contains("token 3"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cycle_is_structural() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t3\tdep\t_\t_\n3\tc\t_\tX\t_\t_\t2\tdep\t_\t_\n";
        assert!(matches!(
            parse_conllu(text),
            Err(CorpusError::Structural { .. })
        ));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n2\tfood\tNOUN\t0\troot\n";
        match parse_conllu(text) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multiword_ranges_are_skipped() {
        let text = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tAUX\t_\t_\t3\taux\t_\t_\n\
                    2\tn't\tnot\tPART\t_\t_\t3\tadvmod\t_\t_\n3\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n";
        let t = &parse_conllu(text).unwrap()[0];
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let trees = parse_conllu(TWO).unwrap();
        let again = parse_conllu(&write_conllu_string(&trees)).unwrap();
        assert_eq!(trees, again);
        assert_eq!(write_conllu_string(&again), TWO.to_string() + "\n");
    }
}
