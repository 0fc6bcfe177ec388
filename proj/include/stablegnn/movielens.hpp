#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stablegnn/errors.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/parallel.hpp"
#include "stablegnn/rng.hpp"
#include "stablegnn/signal.hpp"

namespace stablegnn {

struct Rating {
    int user = 0;
    int movie = 0;
    double rating = 0.0; // integer 1..5 stored as real
    std::int64_t timestamp = 0;
};

struct RatingsTable {
    std::vector<Rating> records; // file order
    std::size_t user_count = 0;
    std::size_t movie_count = 0;

    void recount() {
        std::unordered_set<int> users, movies;
        for (const auto& r : records) {
            users.insert(r.user);
            movies.insert(r.movie);
        }
        user_count = users.size();
        movie_count = movies.size();
    }
};

namespace detail {

inline bool parse_int_field(const std::string& s, long long& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

} // namespace detail

/// MovieLens u.data format: `user \t movie \t rating \t timestamp`, one
/// rating per line, integer ratings 1..5, unique (user, movie) pairs.
inline RatingsTable load_ratings(std::istream& is) {
    RatingsTable table;
    std::unordered_set<std::uint64_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::string fields[4];
        std::size_t field = 0, start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                if (field < 4) fields[field] = line.substr(start, i - start);
                ++field;
                start = i + 1;
            }
        }
        long long user = 0, movie = 0, rating = 0, ts = 0;
        if (field != 4 || !detail::parse_int_field(fields[0], user) ||
            !detail::parse_int_field(fields[1], movie) ||
            !detail::parse_int_field(fields[2], rating) ||
            !detail::parse_int_field(fields[3], ts))
            fail(errc::malformed_line, "line " + std::to_string(line_no));
        if (rating < 1 || rating > 5)
            fail(errc::rating_out_of_range,
                 "line " + std::to_string(line_no) + ": rating " + std::to_string(rating));
        const std::uint64_t key = (std::uint64_t(std::uint32_t(user)) << 32) |
                                  std::uint64_t(std::uint32_t(movie));
        if (!seen.insert(key).second)
            fail(errc::duplicate_pair, "line " + std::to_string(line_no) + ": user " +
                                           std::to_string(user) + " movie " +
                                           std::to_string(movie));
        table.records.push_back({int(user), int(movie), double(rating), ts});
    }
    if (table.records.empty()) fail(errc::empty_dataset, "no rating records");
    table.recount();
    return table;
}

inline RatingsTable load_ratings(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(errc::io_failure, "cannot open " + path);
    return load_ratings(is);
}

struct DataOptions {
    int target_movie = 0;       // 0 selects the most-rated movie
    std::size_t top_movies = 0; // 0 keeps every rated movie
};

struct GraphOptions {
    std::size_t min_common = 2; // pairs with fewer co-raters get weight 0
    std::size_t top_k = 0;      // 0 disables kNN sparsification
    bool keep_negative = false; // negative correlations are clipped by default
};

/// Node universe for one dataset: which movies become graph nodes.
struct MovieIndex {
    std::vector<int> node_movies;                     // node -> movie id (ascending)
    std::unordered_map<int, std::size_t> node_of;     // movie id -> node
    int target_movie = 0;
    std::size_t target_node = 0;

    std::size_t size() const { return node_movies.size(); }
};

inline std::vector<std::pair<int, std::size_t>> movie_rating_counts(const RatingsTable& table) {
    std::map<int, std::size_t> counts;
    for (const auto& r : table.records) counts[r.movie] += 1;
    return {counts.begin(), counts.end()};
}

inline int most_rated_movie(const RatingsTable& table) {
    const auto counts = movie_rating_counts(table);
    if (counts.empty()) fail(errc::empty_dataset, "no ratings");
    auto best = counts.front();
    for (const auto& c : counts)
        if (c.second > best.second) best = c; // ties keep the smaller id
    return best.first;
}

/// Selects graph nodes (optionally the top_movies most-rated ones) and the
/// prediction target. The target movie is always part of the node set.
inline MovieIndex build_movie_index(const RatingsTable& table, const DataOptions& opts) {
    auto counts = movie_rating_counts(table);
    if (counts.empty()) fail(errc::empty_dataset, "no ratings");

    const int target =
        opts.target_movie != 0 ? opts.target_movie : most_rated_movie(table);

    std::vector<int> chosen;
    if (opts.top_movies == 0 || opts.top_movies >= counts.size()) {
        chosen.reserve(counts.size());
        for (const auto& c : counts) chosen.push_back(c.first);
    } else {
        std::sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        counts.resize(opts.top_movies);
        bool has_target = false;
        for (const auto& c : counts) has_target = has_target || c.first == target;
        if (!has_target) counts.back() = {target, 0};
        chosen.reserve(counts.size());
        for (const auto& c : counts) chosen.push_back(c.first);
        std::sort(chosen.begin(), chosen.end());
    }

    MovieIndex index;
    index.node_movies = std::move(chosen);
    index.target_movie = target;
    for (std::size_t i = 0; i < index.node_movies.size(); ++i)
        index.node_of[index.node_movies[i]] = i;
    const auto it = index.node_of.find(target);
    if (it == index.node_of.end())
        fail(errc::no_eligible_users, "target movie " + std::to_string(target) + " has no ratings");
    index.target_node = it->second;
    return index;
}

/// Movie-movie Pearson correlation graph over the given ratings (training
/// side only, post split). Pairwise-complete: each pair's correlation uses
/// exactly the users who rated both movies. Normalized to unit spectral norm.
inline Gso build_similarity_graph(const RatingsTable& train_ratings, const MovieIndex& index,
                                  const GraphOptions& opts) {
    const std::size_t n = index.size();

    // Per-node rating list sorted by user for two-pointer intersections.
    std::vector<std::vector<std::pair<int, double>>> by_node(n);
    for (const auto& r : train_ratings.records) {
        const auto it = index.node_of.find(r.movie);
        if (it == index.node_of.end()) continue;
        by_node[it->second].emplace_back(r.user, r.rating);
    }
    for (auto& v : by_node) std::sort(v.begin(), v.end());

    Matrix w(n, n);
    parallel_for(n, [&](std::size_t i) {
        const auto& a = by_node[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& b = by_node[j];
            std::size_t pa = 0, pb = 0, cnt = 0;
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            while (pa < a.size() && pb < b.size()) {
                if (a[pa].first < b[pb].first) {
                    ++pa;
                } else if (a[pa].first > b[pb].first) {
                    ++pb;
                } else {
                    const double x = a[pa].second, y = b[pb].second;
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                    ++cnt;
                    ++pa;
                    ++pb;
                }
            }
            double corr = 0.0;
            if (cnt >= opts.min_common) {
                const double num = sxy - sx * sy / double(cnt);
                const double dx = sxx - sx * sx / double(cnt);
                const double dy = syy - sy * sy / double(cnt);
                if (dx > 1e-12 && dy > 1e-12) {
                    corr = num / std::sqrt(dx * dy);
                    corr = std::clamp(corr, -1.0, 1.0);
                }
            }
            if (!opts.keep_negative && corr < 0.0) corr = 0.0;
            w(i, j) = corr;
            w(j, i) = corr;
        }
    });

    if (opts.top_k > 0) {
        // Keep the k strongest neighbors per row, then re-symmetrize by max.
        Matrix kept(n, n);
        std::vector<std::pair<double, std::size_t>> row(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) row[j] = {std::abs(w(i, j)), j};
            const std::size_t k = std::min(opts.top_k, n - 1);
            std::partial_sort(row.begin(), row.begin() + k, row.end(),
                              [](const auto& a, const auto& b) {
                                  return a.first != b.first ? a.first > b.first
                                                            : a.second < b.second;
                              });
            for (std::size_t r = 0; r < k; ++r) kept(i, row[r].second) = w(i, row[r].second);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double m = std::max(kept(i, j), kept(j, i));
                w(i, j) = m;
                w(j, i) = m;
            }
    }

    if (w.max_abs() == 0.0) fail(errc::degenerate_graph, "similarity graph is all-zero");
    const double norm = spectral_norm_sym(w, 1e-10, 20000);
    w *= 1.0 / norm;
    return Gso(std::move(w));
}

/// One sample per user who rated the target movie: input = the user's
/// ratings with the target entry withheld (zeroed), target = the rating at
/// the target node, mask = that single node.
inline SignalBatch make_samples(const RatingsTable& ratings, const MovieIndex& index) {
    std::map<int, std::vector<std::pair<std::size_t, double>>> by_user;
    for (const auto& r : ratings.records) {
        const auto it = index.node_of.find(r.movie);
        if (it == index.node_of.end()) continue;
        by_user[r.user].emplace_back(it->second, r.rating);
    }

    SignalBatch batch;
    const std::size_t n = index.size();
    for (const auto& [user, entries] : by_user) {
        double target_rating = 0.0;
        bool has_target = false;
        for (const auto& [node, rating] : entries)
            if (node == index.target_node) {
                target_rating = rating;
                has_target = true;
            }
        if (!has_target) continue;

        GraphSignal x(n, 0.0), y(n, 0.0);
        for (const auto& [node, rating] : entries) x[node] = rating;
        x[index.target_node] = 0.0;
        y[index.target_node] = target_rating;
        NodeMask mask(n, 0);
        mask[index.target_node] = 1;
        batch.inputs.push_back(std::move(x));
        batch.targets.push_back(std::move(y));
        batch.masks.push_back(std::move(mask));
    }
    if (batch.empty()) fail(errc::no_eligible_users, "no user rated the target movie");
    return batch;
}

struct DatasetSplit {
    SignalBatch train;
    SignalBatch slack; // subset of train used for dual updates
    SignalBatch test;
    Gso graph;
    MovieIndex index;
    std::vector<int> train_users;
    std::vector<int> test_users;
};

namespace detail {

inline RatingsTable restrict_to_users(const RatingsTable& table,
                                      const std::unordered_set<int>& users) {
    RatingsTable out;
    for (const auto& r : table.records)
        if (users.count(r.user)) out.records.push_back(r);
    out.recount();
    return out;
}

} // namespace detail

/// User-level 90/10 split of the users who rated the target movie. The
/// similarity graph is built from the train-side users' ratings only, so no
/// test rating can influence any edge weight.
inline DatasetSplit split_dataset(const RatingsTable& table, double fraction,
                                  std::uint64_t split_seed, const DataOptions& data_opts,
                                  const GraphOptions& graph_opts, double slack_fraction = 0.2) {
    if (!(fraction > 0.0 && fraction < 1.0))
        fail(errc::bad_config, "split fraction must be in (0, 1)");
    if (!(slack_fraction > 0.0 && slack_fraction <= 1.0))
        fail(errc::bad_config, "slack fraction must be in (0, 1]");

    MovieIndex index = build_movie_index(table, data_opts);

    std::vector<int> eligible;
    {
        std::unordered_set<int> users;
        for (const auto& r : table.records)
            if (r.movie == index.target_movie) users.insert(r.user);
        eligible.assign(users.begin(), users.end());
        std::sort(eligible.begin(), eligible.end());
    }
    if (eligible.size() < 10)
        fail(errc::too_few_users, "only " + std::to_string(eligible.size()) +
                                      " users rated the target movie");

    Rng split_rng = Rng::stream(split_seed, 0x5611);
    for (std::size_t i = eligible.size(); i > 1; --i)
        std::swap(eligible[i - 1], eligible[split_rng.below(i)]);

    const std::size_t n_train = std::size_t(fraction * double(eligible.size()));
    std::vector<int> train_users(eligible.begin(), eligible.begin() + n_train);
    std::vector<int> test_users(eligible.begin() + n_train, eligible.end());
    std::sort(train_users.begin(), train_users.end());
    std::sort(test_users.begin(), test_users.end());

    const RatingsTable train_table = detail::restrict_to_users(
        table, std::unordered_set<int>(train_users.begin(), train_users.end()));
    const RatingsTable test_table = detail::restrict_to_users(
        table, std::unordered_set<int>(test_users.begin(), test_users.end()));

    DatasetSplit split{.train = make_samples(train_table, index),
                       .slack = {},
                       .test = make_samples(test_table, index),
                       .graph = build_similarity_graph(train_table, index, graph_opts),
                       .index = index,
                       .train_users = std::move(train_users),
                       .test_users = std::move(test_users)};

    // Fixed slack subset for the whole run, drawn once per split seed.
    std::vector<std::size_t> idx(split.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng slack_rng = Rng::stream(split_seed, 0x51ac);
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[slack_rng.below(i)]);
    const std::size_t n_slack =
        std::max<std::size_t>(1, std::size_t(slack_fraction * double(split.train.size())));
    idx.resize(std::min(n_slack, idx.size()));
    std::sort(idx.begin(), idx.end());
    split.slack = split.train.subset(idx);
    return split;
}

} // namespace stablegnn
