//! AVL tree of providers ordered by `(charge, arrival seq)`.
//!
//! Every mutation reports how many nodes it touched (path nodes plus nodes
//! moved by rotations) so the caller can meter it. Searches report key
//! comparisons, one per visited node.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::domain::{Money, UserId, UserSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BookKey {
    pub charge: Money,
    pub seq: u64,
}

#[derive(Debug, Clone)]
struct Node {
    key: BookKey,
    value: UserSpec,
    height: u32,
    left: Link,
    right: Link,
}

type Link = Option<Box<Node>>;

fn height(link: &Link) -> u32 {
    link.as_ref().map_or(0, |n| n.height)
}

impl Node {
    fn leaf(key: BookKey, value: UserSpec) -> Box<Node> {
        Box::new(Node {
            key,
            value,
            height: 1,
            left: None,
            right: None,
        })
    }

    fn update(&mut self) {
        self.height = 1 + height(&self.left).max(height(&self.right));
    }

    fn balance(&self) -> i64 {
        height(&self.left) as i64 - height(&self.right) as i64
    }
}

fn rotate_right(mut n: Box<Node>, touches: &mut u64) -> Box<Node> {
    let mut l = n.left.take().expect("rotate_right without left child");
    n.left = l.right.take();
    n.update();
    l.right = Some(n);
    l.update();
    *touches += 2;
    l
}

fn rotate_left(mut n: Box<Node>, touches: &mut u64) -> Box<Node> {
    let mut r = n.right.take().expect("rotate_left without right child");
    n.right = r.left.take();
    n.update();
    r.left = Some(n);
    r.update();
    *touches += 2;
    r
}

fn rebalance(mut n: Box<Node>, touches: &mut u64) -> Box<Node> {
    n.update();
    let b = n.balance();
    if b > 1 {
        if n.left.as_ref().unwrap().balance() < 0 {
            n.left = Some(rotate_left(n.left.take().unwrap(), touches));
        }
        return rotate_right(n, touches);
    }
    if b < -1 {
        if n.right.as_ref().unwrap().balance() > 0 {
            n.right = Some(rotate_right(n.right.take().unwrap(), touches));
        }
        return rotate_left(n, touches);
    }
    n
}

fn insert(link: Link, key: BookKey, value: UserSpec, touches: &mut u64) -> Box<Node> {
    *touches += 1;
    match link {
        None => Node::leaf(key, value),
        Some(mut n) => {
            match key.cmp(&n.key) {
                Ordering::Less => n.left = Some(insert(n.left.take(), key, value, touches)),
                Ordering::Greater => n.right = Some(insert(n.right.take(), key, value, touches)),
                Ordering::Equal => unreachable!("book keys are unique"),
            }
            rebalance(n, touches)
        }
    }
}

fn take_min(mut n: Box<Node>, touches: &mut u64) -> (Link, Box<Node>) {
    *touches += 1;
    match n.left.take() {
        None => (n.right.take(), n),
        Some(l) => {
            let (rest, min) = take_min(l, touches);
            n.left = rest;
            (Some(rebalance(n, touches)), min)
        }
    }
}

fn remove(link: Link, key: &BookKey, touches: &mut u64) -> (Link, Option<UserSpec>) {
    let Some(mut n) = link else {
        return (None, None);
    };
    *touches += 1;
    let removed = match key.cmp(&n.key) {
        Ordering::Less => {
            let (l, v) = remove(n.left.take(), key, touches);
            n.left = l;
            v
        }
        Ordering::Greater => {
            let (r, v) = remove(n.right.take(), key, touches);
            n.right = r;
            v
        }
        Ordering::Equal => {
            let Node {
                left, right, value, ..
            } = *n;
            let replacement = match (left, right) {
                (None, None) => None,
                (Some(c), None) | (None, Some(c)) => Some(c),
                (Some(l), Some(r)) => {
                    let (rest, mut succ) = take_min(r, touches);
                    succ.left = Some(l);
                    succ.right = rest;
                    Some(rebalance(succ, touches))
                }
            };
            return (replacement, Some(value));
        }
    };
    (Some(rebalance(n, touches)), removed)
}

/// AVL height bound `1.4405·log2(n + 2) − 0.3277` (Adelson-Velsky–Landis).
pub fn avl_height_bound(size: usize) -> f64 {
    1.4405 * ((size + 2) as f64).log2() - 0.3277
}

#[derive(Debug, Clone, Default)]
pub struct ProviderBook {
    root: Link,
    len: usize,
    next_seq: u64,
    keys: BTreeMap<UserId, BookKey>,
}

impl ProviderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> u32 {
        height(&self.root)
    }

    pub fn contains(&self, id: UserId) -> bool {
        self.keys.contains_key(&id)
    }

    pub fn key_of(&self, id: UserId) -> Option<BookKey> {
        self.keys.get(&id).copied()
    }

    /// Inserts with the next arrival sequence number. Returns the key and
    /// the number of nodes touched, or `None` if `spec.id` is already here.
    pub fn insert(&mut self, spec: UserSpec) -> Option<(BookKey, u64)> {
        if self.keys.contains_key(&spec.id) {
            return None;
        }
        let key = BookKey {
            charge: spec.price,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.keys.insert(spec.id, key);
        let mut touches = 0;
        self.root = Some(insert(self.root.take(), key, spec, &mut touches));
        self.len += 1;
        Some((key, touches))
    }

    /// Removes a provider by id, returning its spec and the touch count.
    pub fn remove(&mut self, id: UserId) -> Option<(UserSpec, u64)> {
        let key = self.keys.remove(&id)?;
        let mut touches = 0;
        let (root, removed) = remove(self.root.take(), &key, &mut touches);
        self.root = root;
        let spec = removed.expect("key index out of sync with tree");
        self.len -= 1;
        Some((spec, touches))
    }

    /// Root-to-leaf descent for the smallest key strictly greater than
    /// `after` (or the minimum when `after` is `None`). Adds one comparison
    /// per visited node to `comparisons`.
    pub fn next_after(
        &self,
        after: Option<BookKey>,
        comparisons: &mut u64,
    ) -> Option<(BookKey, &UserSpec)> {
        let mut best: Option<&Node> = None;
        let mut cur = self.root.as_deref();
        while let Some(n) = cur {
            *comparisons += 1;
            if after.is_none_or(|a| n.key > a) {
                best = Some(n);
                cur = n.left.as_deref();
            } else {
                cur = n.right.as_deref();
            }
        }
        best.map(|n| (n.key, &n.value))
    }

    /// In-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = (BookKey, &UserSpec)> {
        let mut stack: Vec<&Node> = Vec::new();
        let mut cur = self.root.as_deref();
        std::iter::from_fn(move || {
            while let Some(n) = cur {
                stack.push(n);
                cur = n.left.as_deref();
            }
            let n = stack.pop()?;
            cur = n.right.as_deref();
            Some((n.key, &n.value))
        })
    }

    /// Full-traversal check of ordering, cached heights, balance factors,
    /// size and the AVL height bound.
    pub fn check_invariants(&self) -> Result<(), String> {
        fn walk(
            link: &Link,
            lo: Option<BookKey>,
            hi: Option<BookKey>,
            count: &mut usize,
        ) -> Result<u32, String> {
            let Some(n) = link else { return Ok(0) };
            if lo.is_some_and(|lo| n.key <= lo) || hi.is_some_and(|hi| n.key >= hi) {
                return Err(format!("order violated at {:?}", n.key));
            }
            if n.key.charge != n.value.price {
                return Err(format!("key/charge mismatch at {:?}", n.key));
            }
            *count += 1;
            let lh = walk(&n.left, lo, Some(n.key), count)?;
            let rh = walk(&n.right, Some(n.key), hi, count)?;
            if n.height != 1 + lh.max(rh) {
                return Err(format!("stale height at {:?}", n.key));
            }
            if (lh as i64 - rh as i64).abs() > 1 {
                return Err(format!("unbalanced at {:?}", n.key));
            }
            Ok(n.height)
        }
        let mut count = 0;
        let h = walk(&self.root, None, None, &mut count)?;
        if count != self.len || count != self.keys.len() {
            return Err(format!(
                "size mismatch: tree {count}, len {}, index {}",
                self.len,
                self.keys.len()
            ));
        }
        if self.len > 0 && h as f64 > avl_height_bound(self.len) {
            return Err(format!("height {h} exceeds AVL bound for {}", self.len));
        }
        Ok(())
    }
}
