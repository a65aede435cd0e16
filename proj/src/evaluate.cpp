#include "desmil/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace desmil {
namespace {

std::unordered_set<std::uint32_t> as_set(std::span<const std::uint32_t> items) {
    return std::unordered_set<std::uint32_t>(items.begin(), items.end());
}

void check_metric_args(std::span<const std::uint32_t> relevant, std::size_t p) {
    if (p == 0) throw std::invalid_argument("metric cutoff must be at least 1");
    if (relevant.empty()) throw std::invalid_argument("metric needs a nonempty relevant set");
}

std::size_t hits_in_top(std::span<const std::uint32_t> recommended,
                        const std::unordered_set<std::uint32_t>& relevant, std::size_t p) {
    std::size_t hits = 0;
    const std::size_t limit = std::min(p, recommended.size());
    for (std::size_t r = 0; r < limit; ++r) hits += relevant.count(recommended[r]);
    return hits;
}

void append_number(std::string& out, double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, ptr);
}

} // namespace

Matrix interests_for_input(const ModelParams& params, std::span<const std::uint32_t> input) {
    if (input.empty()) throw std::invalid_argument("interests_for_input: empty input history");
    const std::size_t l_max = params.max_prefix();
    const std::size_t t = std::min(input.size(), l_max);
    const std::size_t start = input.size() - t; // most recent items
    const std::size_t d = params.dim();

    Matrix e(t, d);
    for (std::size_t k = 0; k < t; ++k) {
        const std::uint32_t item = input[start + k];
        if (item >= params.pad_index())
            throw std::out_of_range("interests_for_input: item index out of range");
        for (std::size_t j = 0; j < d; ++j)
            e(k, j) = params.item_embeddings(item, j) + params.position_embeddings(k, j);
    }
    Matrix attention = softmax_rows(
        matmul(params.attention_w2, tanh_elementwise(matmul(params.attention_w1, transpose(e)))));
    return matmul(attention, e);
}

std::vector<std::uint32_t> retrieve_topN(const Matrix& interests, const ModelParams& params,
                                         std::size_t n) {
    if (n == 0) throw std::invalid_argument("retrieve_topN: n must be at least 1");
    if (interests.cols() != params.dim())
        throw std::invalid_argument("retrieve_topN: interest width differs from embedding width");
    const std::size_t num_items = params.num_items();
    const std::size_t c = interests.rows();

    // Union members are re-ranked by their best score over every interest,
    // not just the interest that shortlisted them.
    std::vector<double> best(num_items, -std::numeric_limits<double>::infinity());
    std::vector<bool> listed(num_items, false);
    std::vector<std::pair<double, std::uint32_t>> scored(num_items);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < num_items; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < interests.cols(); ++k)
                s += interests(i, k) * params.item_embeddings(j, k);
            scored[j] = {s, static_cast<std::uint32_t>(j)};
            if (s > best[j]) best[j] = s;
        }
        const std::size_t take = std::min(n, num_items);
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                          scored.end(), [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        for (std::size_t r = 0; r < take; ++r) listed[scored[r].second] = true;
    }

    std::vector<std::uint32_t> unioned;
    for (std::size_t j = 0; j < num_items; ++j)
        if (listed[j]) unioned.push_back(static_cast<std::uint32_t>(j));
    std::sort(unioned.begin(), unioned.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (best[a] != best[b]) return best[a] > best[b];
        return a < b;
    });
    if (unioned.size() > n) unioned.resize(n);
    return unioned;
}

double recall_at_p(std::span<const std::uint32_t> recommended,
                   std::span<const std::uint32_t> relevant, std::size_t p) {
    check_metric_args(relevant, p);
    const auto rel = as_set(relevant);
    return static_cast<double>(hits_in_top(recommended, rel, p)) /
           static_cast<double>(rel.size());
}

double ndcg_at_p(std::span<const std::uint32_t> recommended,
                 std::span<const std::uint32_t> relevant, std::size_t p) {
    check_metric_args(relevant, p);
    const auto rel = as_set(relevant);
    double dcg = 0.0;
    const std::size_t limit = std::min(p, recommended.size());
    for (std::size_t r = 1; r <= limit; ++r)
        if (rel.count(recommended[r - 1])) dcg += 1.0 / std::log2(static_cast<double>(r + 1));
    double idcg = 0.0;
    const std::size_t ideal = std::min(p, rel.size());
    for (std::size_t r = 1; r <= ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 1));
    return dcg / idcg;
}

double hr_at_p(std::span<const std::uint32_t> recommended,
               std::span<const std::uint32_t> relevant, std::size_t p) {
    check_metric_args(relevant, p);
    return hits_in_top(recommended, as_set(relevant), p) > 0 ? 1.0 : 0.0;
}

MetricsReport evaluate_model(const ModelParams& params, std::span<const EvalPair> pairs,
                             std::size_t cutoff_small, std::size_t cutoff_large,
                             TargetGranularity granularity) {
    if (pairs.empty()) throw std::invalid_argument("evaluate_model: empty evaluation set");
    std::vector<EvalPair> expanded;
    if (granularity == TargetGranularity::per_target) {
        expanded = expand_per_target({pairs.begin(), pairs.end()});
        pairs = expanded;
    }

    const std::size_t depth = std::max(cutoff_small, cutoff_large);
    MetricsReport report;
    for (const EvalPair& pr : pairs) {
        if (pr.targets.empty() || pr.input.empty()) continue;
        const Matrix interests = interests_for_input(params, pr.input);
        const auto recommended = retrieve_topN(interests, params, depth);
        report.recall20 += recall_at_p(recommended, pr.targets, cutoff_small);
        report.recall50 += recall_at_p(recommended, pr.targets, cutoff_large);
        report.ndcg20 += ndcg_at_p(recommended, pr.targets, cutoff_small);
        report.ndcg50 += ndcg_at_p(recommended, pr.targets, cutoff_large);
        report.hr20 += hr_at_p(recommended, pr.targets, cutoff_small);
        report.hr50 += hr_at_p(recommended, pr.targets, cutoff_large);
        ++report.users;
    }
    if (report.users == 0)
        throw std::invalid_argument("evaluate_model: no user had both input and targets");
    const double scale = 100.0 / static_cast<double>(report.users);
    report.recall20 *= scale;
    report.recall50 *= scale;
    report.ndcg20 *= scale;
    report.ndcg50 *= scale;
    report.hr20 *= scale;
    report.hr50 *= scale;
    return report;
}

std::string metrics_to_json(const MetricsReport& report) {
    std::string out = "{\"recall20\":";
    append_number(out, report.recall20);
    out += ",\"recall50\":";
    append_number(out, report.recall50);
    out += ",\"ndcg20\":";
    append_number(out, report.ndcg20);
    out += ",\"ndcg50\":";
    append_number(out, report.ndcg50);
    out += ",\"hr20\":";
    append_number(out, report.hr20);
    out += ",\"hr50\":";
    append_number(out, report.hr50);
    out += ",\"users\":";
    out += std::to_string(report.users);
    out += "}";
    return out;
}

} // namespace desmil
