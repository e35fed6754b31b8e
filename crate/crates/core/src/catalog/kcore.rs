use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{Catalog, CatalogError};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    User(usize),
    Item(usize),
}

/// Iteratively remove users and items with fewer than `k` interactions until
/// every remaining user and item has at least `k`.
///
/// Items that end up with no interactions are dropped from the item table.
pub fn kcore_filter(catalog: &Catalog, k: usize) -> Result<Catalog, CatalogError> {
    if k == 0 {
        return Err(CatalogError::InvalidK);
    }
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut user_edges: Vec<Vec<usize>> = Vec::new();
    let mut item_edges: Vec<Vec<usize>> = Vec::new();
    let mut endpoints = Vec::with_capacity(catalog.interactions.len());

    for (edge, row) in catalog.interactions.iter().enumerate() {
        let u = *user_index.entry(row.user_id.as_str()).or_insert_with(|| {
            user_edges.push(Vec::new());
            user_edges.len() - 1
        });
        let i = *item_index.entry(row.item_id.as_str()).or_insert_with(|| {
            item_edges.push(Vec::new());
            item_edges.len() - 1
        });
        user_edges[u].push(edge);
        item_edges[i].push(edge);
        endpoints.push((u, i));
    }

    let mut user_degree: Vec<usize> = user_edges.iter().map(Vec::len).collect();
    let mut item_degree: Vec<usize> = item_edges.iter().map(Vec::len).collect();
    let mut alive = vec![true; endpoints.len()];
    let mut removed_user = vec![false; user_edges.len()];
    let mut removed_item = vec![false; item_edges.len()];

    let mut queue: VecDeque<Node> = VecDeque::new();
    for (u, d) in user_degree.iter().enumerate() {
        if *d < k {
            queue.push_back(Node::User(u));
        }
    }
    for (i, d) in item_degree.iter().enumerate() {
        if *d < k {
            queue.push_back(Node::Item(i));
        }
    }

    while let Some(node) = queue.pop_front() {
        let edges = match node {
            Node::User(u) => {
                if removed_user[u] {
                    continue;
                }
                removed_user[u] = true;
                &user_edges[u]
            }
            Node::Item(i) => {
                if removed_item[i] {
                    continue;
                }
                removed_item[i] = true;
                &item_edges[i]
            }
        };
        for &edge in edges {
            if !alive[edge] {
                continue;
            }
            alive[edge] = false;
            let (u, i) = endpoints[edge];
            user_degree[u] -= 1;
            item_degree[i] -= 1;
            if !removed_user[u] && user_degree[u] < k {
                queue.push_back(Node::User(u));
            }
            if !removed_item[i] && item_degree[i] < k {
                queue.push_back(Node::Item(i));
            }
        }
    }

    let interactions: Vec<_> = catalog
        .interactions
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(r, _)| r.clone())
        .collect();
    if interactions.is_empty() {
        return Err(CatalogError::EmptyCatalog(format!("{k}-core filtering")));
    }
    let mut items = BTreeMap::new();
    for row in &interactions {
        if !items.contains_key(&row.item_id) {
            if let Some(item) = catalog.items.get(&row.item_id) {
                items.insert(row.item_id.clone(), item.clone());
            }
        }
    }
    Ok(Catalog {
        items,
        interactions,
        provenance: catalog.provenance.clone(),
    })
}
