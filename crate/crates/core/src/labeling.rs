//! Ground-truth labels from a buggy/fixed source pair.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinePatch {
    /// Buggy-file line numbers (1-based) removed by the fix.
    pub deletions: BTreeSet<u32>,
    /// `(position_after, text)`: new text goes after buggy line `position_after` (0 = before line 1).
    pub insertions: Vec<(u32, String)>,
}

impl LinePatch {
    pub fn is_empty(&self) -> bool {
        self.deletions.is_empty() && self.insertions.is_empty()
    }
}

/// Minimal LCS line diff. Whenever deleting the current buggy line keeps the
/// script minimal it is deleted, so ties go to the earliest deletions and a
/// replaced line shows up as a deletion plus an insertion anchored at the
/// hunk start.
pub fn diff_lines<S: AsRef<str>>(buggy: &[S], fixed: &[S]) -> LinePatch {
    let (n, m) = (buggy.len(), fixed.len());
    // lcs[i][j] = LCS length of buggy[i..] and fixed[j..]
    let width = m + 1;
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if buggy[i].as_ref() == fixed[j].as_ref() {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }

    let mut patch = LinePatch::default();
    let (mut i, mut j) = (0usize, 0usize);
    let mut hunk_start: Option<u32> = None;
    while i < n || j < m {
        if i < n && lcs[(i + 1) * width + j] == lcs[i * width + j] {
            hunk_start.get_or_insert(i as u32);
            patch.deletions.insert(i as u32 + 1);
            i += 1;
        } else if i < n && j < m && buggy[i].as_ref() == fixed[j].as_ref() {
            i += 1;
            j += 1;
            hunk_start = None;
        } else {
            let at = *hunk_start.get_or_insert(i as u32);
            patch.insertions.push((at, fixed[j].as_ref().to_string()));
            j += 1;
        }
    }
    patch
}

/// Deleted lines are buggy; an insertion marks the closest preceding buggy line
/// (line 1 for insertions at the top of the file).
pub fn label_from_patch(patch: &LinePatch, buggy_len: u32) -> BTreeSet<u32> {
    let mut labels: BTreeSet<u32> = patch.deletions.clone();
    for &(after, _) in &patch.insertions {
        labels.insert(after.max(1));
    }
    labels.retain(|&l| l >= 1 && l <= buggy_len.max(1));
    labels
}

pub fn label_sources<S: AsRef<str>>(buggy: &[S], fixed: &[S]) -> BTreeSet<u32> {
    label_from_patch(&diff_lines(buggy, fixed), buggy.len() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lines(s: &str) -> Vec<&str> {
        s.lines().collect()
    }

    #[test]
    fn identical_sources_give_empty_patch() {
        let a = lines("a\nb\nc");
        assert!(diff_lines(&a, &a).is_empty());
    }

    #[test]
    fn replaced_line() {
        let p = diff_lines(&lines("a\nb\nx = 1\nd"), &lines("a\nb\nx = 2\nd"));
        assert_eq!(p.deletions, BTreeSet::from([3]));
        assert_eq!(p.insertions, vec![(2, "x = 2".to_string())]);
        assert_eq!(label_from_patch(&p, 4), BTreeSet::from([2, 3]));
    }

    #[test]
    fn pure_insertion() {
        let p = diff_lines(&lines("a\nb\nc"), &lines("a\nb\nnew\nc"));
        assert!(p.deletions.is_empty());
        assert_eq!(p.insertions, vec![(2, "new".to_string())]);
        assert_eq!(label_from_patch(&p, 3), BTreeSet::from([2]));
    }

    #[test]
    fn insertion_at_top_maps_to_line_one() {
        let p = diff_lines(&lines("a\nb"), &lines("z\na\nb"));
        assert_eq!(p.insertions, vec![(0, "z".to_string())]);
        assert_eq!(label_from_patch(&p, 2), BTreeSet::from([1]));
    }

    #[test]
    fn deletion_labels_itself() {
        let patch = LinePatch {
            deletions: BTreeSet::from([5]),
            insertions: vec![],
        };
        assert_eq!(label_from_patch(&patch, 9), BTreeSet::from([5]));
        let p = diff_lines(&lines("a\nb\nc\nd\ne"), &lines("a\nb\nc\nd"));
        assert_eq!(label_from_patch(&p, 5), BTreeSet::from([5]));
    }

    #[test]
    fn earlier_deletion_preferred_on_ties() {
        // deleting either "x" yields the same LCS; the first one goes
        let p = diff_lines(&lines("x\nx"), &lines("x"));
        assert_eq!(p.deletions, BTreeSet::from([1]));
    }

    fn apply(buggy: &[String], patch: &LinePatch) -> Vec<String> {
        let mut out = Vec::new();
        let ins_at = |pos: u32| patch.insertions.iter().filter(move |(a, _)| *a == pos).map(|(_, t)| t.clone());
        out.extend(ins_at(0));
        for (i, line) in buggy.iter().enumerate() {
            let no = i as u32 + 1;
            if !patch.deletions.contains(&no) {
                out.push(line.clone());
            }
            out.extend(ins_at(no));
        }
        out
    }

    proptest! {
        #[test]
        fn patch_reconstructs_fixed(
            a in proptest::collection::vec("[abc]", 1..12),
            b in proptest::collection::vec("[abc]", 1..12),
        ) {
            let p = diff_lines(&a, &b);
            let rebuilt = apply(&a, &p);
            prop_assert_eq!(&rebuilt, &b);
            let kept = a.len() - p.deletions.len();
            prop_assert_eq!(p.insertions.len(), b.len() - kept);

            let labels = label_from_patch(&p, a.len() as u32);
            prop_assert!(labels.iter().all(|&l| l >= 1 && l as usize <= a.len()));
            prop_assert_eq!(labels.is_empty(), p.is_empty());
            prop_assert_eq!(label_from_patch(&p, a.len() as u32), labels);
        }
    }
}
