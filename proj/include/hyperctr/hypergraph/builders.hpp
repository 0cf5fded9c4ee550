#pragma once

#include <map>
#include <set>
#include <span>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/hypergraph/hypergraph.hpp"

namespace hyperctr {

// One user-level graph per modality. Nodes are all users; those outside the
// slot stay isolated and are dropped by compact() before convolution.
struct GroupHypergraphSet {
  std::size_t slot = 0;
  std::vector<Modality> modalities;
  std::vector<Hypergraph> graphs;
};

// Item-level graphs: one per modality view plus the union graph. Nodes are all items.
struct ItemHypergraphSet {
  std::size_t slot = 0;
  std::vector<Modality> views;
  std::vector<Hypergraph> view_graphs;
  Hypergraph group;
};

// For every (item, modality) bucket, the users who interacted with the item
// and hold that modality as active form one hyperedge (singletons included).
// Edges are emitted in item order within each modality graph.
inline GroupHypergraphSet build_group_hypergraphs(std::size_t slot, std::span<const InteractionRecord> interactions,
                                                  std::size_t num_users, std::span<const ModalityMask> active,
                                                  const std::vector<Modality>& modalities) {
  if (active.size() < num_users) throw ContractError("interest assignment missing for some users");
  std::map<std::uint32_t, std::set<std::size_t>> users_by_item;
  for (const auto& r : interactions) {
    if (r.user >= num_users) throw ContractError("record user " + std::to_string(r.user) + " out of range");
    const ModalityMask& mask = active[r.user];
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; })) {
      throw ContractError("user " + std::to_string(r.user) + " has no active modality");
    }
    users_by_item[r.item].insert(r.user);
  }
  GroupHypergraphSet set;
  set.slot = slot;
  set.modalities = modalities;
  for (Modality m : modalities) {
    Hypergraph g;
    g.num_nodes = num_users;
    g.kind = NodeKind::user;
    for (const auto& [item, users] : users_by_item) {
      std::vector<std::size_t> members;
      for (std::size_t u : users) {
        if (active[u][modality_index(m)]) members.push_back(u);
      }
      if (!members.empty()) g.add_edge(std::move(members));
    }
    set.graphs.push_back(std::move(g));
  }
  return set;
}

// For every user in the slot, the items they interacted with form one
// hyperedge in each view where those items carry features. The union graph
// holds each distinct edge once, in (user, view) order.
inline ItemHypergraphSet build_item_hypergraphs(std::size_t slot, std::span<const InteractionRecord> interactions,
                                                std::size_t num_items, const ModalFeatureStore& features) {
  std::map<std::uint32_t, std::set<std::size_t>> items_by_user;
  for (const auto& r : interactions) {
    if (r.item >= num_items) throw ContractError("record item " + std::to_string(r.item) + " out of range");
    items_by_user[r.user].insert(r.item);
  }
  ItemHypergraphSet set;
  set.slot = slot;
  set.views = features.modalities();
  set.view_graphs.resize(set.views.size());
  for (auto& g : set.view_graphs) g.num_nodes = num_items;
  set.group.num_nodes = num_items;
  std::set<std::vector<std::size_t>> seen;
  for (const auto& [user, items] : items_by_user) {
    for (std::size_t j = 0; j < set.views.size(); ++j) {
      std::vector<std::size_t> members;
      for (std::size_t i : items) {
        if (features.present(i, set.views[j])) members.push_back(i);
      }
      if (members.empty()) continue;
      if (seen.insert(members).second) set.group.add_edge(members);
      set.view_graphs[j].add_edge(std::move(members));
    }
  }
  return set;
}

}  // namespace hyperctr
