use super::{CorpusError, Result};

/// One word of a sentence. `index` is 1-based; the CoNLL-U columns the
/// pipeline does not read are carried along verbatim.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub lemma: Option<String>,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    pub fn new(index: usize, form: impl Into<String>, upos: impl Into<String>) -> Self {
        Self {
            index,
            form: form.into(),
            lemma: None,
            upos: upos.into(),
            xpos: "_".into(),
            feats: "_".into(),
            deps: "_".into(),
            misc: "_".into(),
        }
    }

    pub fn with_lemma(mut self, lemma: impl Into<String>) -> Self {
        self.lemma = Some(lemma.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    /// 0 for the root arc.
    pub head: usize,
    pub dependent: usize,
    pub label: String,
}

/// A dependency tree: one head and one label per token, a single root, no
/// cycles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepTree {
    tokens: Vec<Token>,
    heads: Vec<usize>,
    labels: Vec<String>,
    comments: Vec<String>,
}

/// Head of a token being inserted by [`DepTree::insert`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadRef {
    /// A token of the original tree, by its original index.
    Existing(usize),
    /// Another token of the same insertion batch, by position in the batch.
    Inserted(usize),
}

#[derive(Clone, Debug)]
pub struct InsertToken {
    pub form: String,
    pub lemma: Option<String>,
    pub upos: String,
    pub head: HeadRef,
    pub label: String,
}

impl DepTree {
    /// Build and validate. `heads[k]` and `labels[k]` belong to token `k + 1`.
    pub fn new(tokens: Vec<Token>, heads: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let tree = Self {
            tokens,
            heads,
            labels,
            comments: Vec::new(),
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn from_arcs(tokens: Vec<Token>, arcs: &[(usize, usize, &str)]) -> Result<Self> {
        let n = tokens.len();
        let mut heads = vec![usize::MAX; n];
        let mut labels = vec![String::new(); n];
        for &(h, d, l) in arcs {
            if d == 0 || d > n {
                return Err(structural("?", format!("dependent {d} out of range")));
            }
            if heads[d - 1] != usize::MAX {
                return Err(structural("?", format!("token {d} has two heads")));
            }
            heads[d - 1] = h;
            labels[d - 1] = l.to_string();
        }
        if let Some(k) = heads.iter().position(|h| *h == usize::MAX) {
            return Err(structural("?", format!("token {} has no head", k + 1)));
        }
        Self::new(tokens, heads, labels)
    }

    pub(crate) fn with_comments(mut self, comments: Vec<String>) -> Self {
        self.comments = comments;
        self
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    /// The `# sent_id` comment, if any.
    pub fn sent_id(&self) -> Option<&str> {
        self.comments
            .iter()
            .find_map(|c| c.strip_prefix("# sent_id = "))
            .map(str::trim)
    }

    fn name(&self) -> String {
        self.sent_id().map_or_else(|| self.text(), str::to_string)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let name = || self.name();
        if self.heads.len() != n || self.labels.len() != n {
            return Err(structural(&name(), "heads/labels length mismatch"));
        }
        for (k, tok) in self.tokens.iter().enumerate() {
            if tok.index != k + 1 {
                return Err(structural(
                    &name(),
                    format!("token ids not contiguous at {}", tok.index),
                ));
            }
            if tok.form.is_empty() {
                return Err(structural(
                    &name(),
                    format!("token {} has an empty form", k + 1),
                ));
            }
            let h = self.heads[k];
            if h > n || h == k + 1 {
                return Err(structural(
                    &name(),
                    format!("token {} has invalid head {h}", k + 1),
                ));
            }
            if self.labels[k].is_empty() {
                return Err(structural(
                    &name(),
                    format!("token {} has an empty label", k + 1),
                ));
            }
        }
        let roots = self.heads.iter().filter(|h| **h == 0).count();
        if roots != 1 {
            return Err(structural(&name(), format!("{roots} root arcs")));
        }
        for start in 1..=n {
            let mut cur = start;
            for _ in 0..=n {
                cur = self.heads[cur - 1];
                if cur == 0 {
                    break;
                }
            }
            if cur != 0 {
                return Err(structural(&name(), format!("cycle through token {start}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Token by 1-based index.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn head(&self, index: usize) -> usize {
        self.heads[index - 1]
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index - 1]
    }

    /// Label with any `:subtype` stripped (`nsubj:pass` -> `nsubj`).
    pub fn base_label(&self, index: usize) -> &str {
        let l = self.label(index);
        l.split(':').next().unwrap_or(l)
    }

    pub fn root(&self) -> usize {
        self.heads
            .iter()
            .position(|h| *h == 0)
            .map(|k| k + 1)
            .unwrap_or(1)
    }

    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        self.heads
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(k, (h, l))| Arc {
                head: *h,
                dependent: k + 1,
                label: l.clone(),
            })
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.heads
            .iter()
            .enumerate()
            .filter(move |(_, h)| **h == index)
            .map(|(k, _)| k + 1)
    }

    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }

    pub fn text(&self) -> String {
        self.forms().join(" ")
    }

    /// Ancestors of `index` from its head up to the root token.
    pub fn ancestors(&self, index: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.head(index);
        while cur != 0 {
            out.push(cur);
            cur = self.head(cur);
        }
        out
    }

    pub fn is_ancestor(&self, ancestor: usize, index: usize) -> bool {
        self.ancestors(index).contains(&ancestor)
    }

    /// All tokens dominated by `index`, including itself, in sentence order.
    pub fn subtree(&self, index: usize) -> Vec<usize> {
        (1..=self.len())
            .filter(|&t| t == index || self.is_ancestor(index, t))
            .collect()
    }

    /// Lowest common ancestor of a non-empty token set.
    pub fn lowest_common_ancestor(&self, tokens: &[usize]) -> usize {
        let chain = |t: usize| {
            let mut c = vec![t];
            c.extend(self.ancestors(t));
            c
        };
        let first = chain(tokens[0]);
        first
            .into_iter()
            .find(|cand| {
                tokens
                    .iter()
                    .all(|&t| t == *cand || self.is_ancestor(*cand, t))
            })
            .unwrap_or_else(|| self.root())
    }

    pub fn set_form(&mut self, index: usize, form: impl Into<String>) {
        let tok = &mut self.tokens[index - 1];
        tok.form = form.into();
        tok.lemma = None;
    }

    pub fn set_arc(
        &mut self,
        dependent: usize,
        head: usize,
        label: impl Into<String>,
    ) -> Result<()> {
        let old = (
            self.heads[dependent - 1],
            std::mem::take(&mut self.labels[dependent - 1]),
        );
        self.heads[dependent - 1] = head;
        self.labels[dependent - 1] = label.into();
        if let Err(e) = self.validate() {
            self.heads[dependent - 1] = old.0;
            self.labels[dependent - 1] = old.1;
            return Err(e);
        }
        Ok(())
    }

    /// Insert new tokens before original position `at` (1-based; `len + 1`
    /// appends). Returns the new tree and the map from old to new indices
    /// (`remap[old]`, with `remap[0] = 0`).
    pub fn insert(&self, at: usize, items: &[InsertToken]) -> Result<(DepTree, Vec<usize>)> {
        let n = self.len();
        if at == 0 || at > n + 1 {
            return Err(structural(
                &self.name(),
                format!("insert position {at} out of range"),
            ));
        }
        let k = items.len();
        let remap: Vec<usize> = (0..=n)
            .map(|old| match old {
                0 => 0,
                o if o < at => o,
                o => o + k,
            })
            .collect();
        let new_index = |r: HeadRef| match r {
            HeadRef::Existing(old) => remap[old],
            HeadRef::Inserted(j) => at + j,
        };
        let mut tokens = Vec::with_capacity(n + k);
        let mut heads = Vec::with_capacity(n + k);
        let mut labels = Vec::with_capacity(n + k);
        for old in 1..=n + 1 {
            if old == at {
                for item in items {
                    tokens.push(Token {
                        lemma: item.lemma.clone(),
                        ..Token::new(0, item.form.clone(), item.upos.clone())
                    });
                    heads.push(new_index(item.head));
                    labels.push(item.label.clone());
                }
            }
            if old <= n {
                tokens.push(self.tokens[old - 1].clone());
                heads.push(remap[self.heads[old - 1]]);
                labels.push(self.labels[old - 1].clone());
            }
        }
        for (i, t) in tokens.iter_mut().enumerate() {
            t.index = i + 1;
        }
        let tree = DepTree::new(tokens, heads, labels)?.with_comments(self.comments.clone());
        Ok((tree, remap))
    }

    /// Same forms and arcs, ignoring the unused CoNLL-U columns and comments.
    pub fn same_structure(&self, other: &DepTree) -> bool {
        self.heads == other.heads
            && self.labels == other.labels
            && self
                .tokens
                .iter()
                .zip(&other.tokens)
                .all(|(a, b)| a.form == b.form)
            && self.len() == other.len()
    }
}

fn structural(sentence: &str, msg: impl Into<String>) -> CorpusError {
    CorpusError::Structural {
        sentence: sentence.to_string(),
        msg: msg.into(),
    }
}
