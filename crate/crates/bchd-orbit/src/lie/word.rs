//! Formal nested-commutator expressions over a finite generator set.

use std::fmt;

/// Binary commutator tree. A leaf holds a 0-based generator index; a node
/// `[left, right]` is the bracket of its subtrees.
///
/// The derived `Ord` (leaf < node, then structural) is the canonical key used
/// for antisymmetry normalization.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BracketWord {
    Leaf(usize),
    Node(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn leaf(index: usize) -> Self {
        BracketWord::Leaf(index)
    }

    pub fn bracket(left: BracketWord, right: BracketWord) -> Self {
        BracketWord::Node(Box::new(left), Box::new(right))
    }

    /// Right-nested chain `[i1,[i2,[...,[ik-1,ik]...]]]` from 0-based indices.
    pub fn right_nested(indices: &[usize]) -> Self {
        assert!(!indices.is_empty());
        let mut w = BracketWord::Leaf(indices[indices.len() - 1]);
        for &i in indices[..indices.len() - 1].iter().rev() {
            w = BracketWord::bracket(BracketWord::Leaf(i), w);
        }
        w
    }

    /// Number of leaves; equals the series degree the word carries.
    pub fn length(&self) -> usize {
        match self {
            BracketWord::Leaf(_) => 1,
            BracketWord::Node(l, r) => l.length() + r.length(),
        }
    }

    /// Nesting depth: 0 for a leaf, 1 + max of children otherwise.
    pub fn height(&self) -> usize {
        match self {
            BracketWord::Leaf(_) => 0,
            BracketWord::Node(l, r) => 1 + l.height().max(r.height()),
        }
    }

    pub fn max_leaf_index(&self) -> usize {
        match self {
            BracketWord::Leaf(i) => *i,
            BracketWord::Node(l, r) => l.max_leaf_index().max(r.max_leaf_index()),
        }
    }

    /// Per-generator leaf multiplicities.
    pub fn leaf_counts(&self, n_generators: usize) -> Vec<u32> {
        let mut counts = vec![0u32; n_generators];
        self.count_into(&mut counts);
        counts
    }

    fn count_into(&self, counts: &mut [u32]) {
        match self {
            BracketWord::Leaf(i) => counts[*i] += 1,
            BracketWord::Node(l, r) => {
                l.count_into(counts);
                r.count_into(counts);
            }
        }
    }

    /// Antisymmetry normal form: children ordered by the structural key,
    /// bottom-up. Returns the normalized word and the sign picked up by the
    /// swaps, or sign 0 when some bracket has equal children (the word is
    /// identically zero).
    pub fn canonicalized(&self) -> (BracketWord, i8) {
        match self {
            BracketWord::Leaf(i) => (BracketWord::Leaf(*i), 1),
            BracketWord::Node(l, r) => {
                let (cl, sl) = l.canonicalized();
                let (cr, sr) = r.canonicalized();
                if sl == 0 || sr == 0 || cl == cr {
                    return (BracketWord::Leaf(0), 0);
                }
                let sign = sl * sr;
                if cl > cr {
                    (BracketWord::bracket(cr, cl), -sign)
                } else {
                    (BracketWord::bracket(cl, cr), sign)
                }
            }
        }
    }

    /// Expansion in the free associative algebra: map from generator strings
    /// to integer coefficients, via `[u,v] = uv - vu`.
    pub fn associative_expansion(&self) -> std::collections::BTreeMap<Vec<usize>, i64> {
        use std::collections::BTreeMap;
        match self {
            BracketWord::Leaf(i) => {
                let mut m = BTreeMap::new();
                m.insert(vec![*i], 1);
                m
            }
            BracketWord::Node(l, r) => {
                let a = l.associative_expansion();
                let b = r.associative_expansion();
                let mut out: BTreeMap<Vec<usize>, i64> = BTreeMap::new();
                for (s1, c1) in &a {
                    for (s2, c2) in &b {
                        let mut fwd = s1.clone();
                        fwd.extend_from_slice(s2);
                        *out.entry(fwd).or_insert(0) += c1 * c2;
                        let mut rev = s2.clone();
                        rev.extend_from_slice(s1);
                        *out.entry(rev).or_insert(0) -= c1 * c2;
                    }
                }
                out.retain(|_, c| *c != 0);
                out
            }
        }
    }
}

impl fmt::Display for BracketWord {
    /// `[f1,[f1,f2]]` notation, generator indices printed 1-based.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::Leaf(i) => write!(f, "f{}", i + 1),
            BracketWord::Node(l, r) => write!(f, "[{},{}]", l, r),
        }
    }
}
