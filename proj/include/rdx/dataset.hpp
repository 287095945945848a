#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rdx {

enum class Design { Sharp, Fuzzy };

const char* to_string(Design design);

/// One unit: outcome, score, the cutoff it faces, treatment status and
/// optional discrete covariate labels.
struct Observation {
  double y = 0.0;
  double x = 0.0;
  double c = 0.0;
  int d = 0;
  std::vector<std::string> z;
};

/// Column names used when reading a CSV file. An empty `d` means the column
/// is absent (allowed in sharp mode). When `z` is empty, every header named
/// z1, z2, ... is picked up as a covariate.
struct ColumnMap {
  std::string y = "y";
  std::string x = "x";
  std::string c = "c";
  std::string d = "d";
  std::vector<std::string> z;
};

/// Conjunction of optional row filters. Unset members match everything.
struct RowFilter {
  std::optional<double> cutoff;
  std::optional<int> treated;
  /// Closed score window [lo, hi].
  std::optional<std::pair<double, double>> window;
  /// Assignment side: true keeps x >= c, false keeps x < c.
  std::optional<bool> above_cutoff;
  /// Covariate cell key (see Dataset::cell_key).
  std::optional<std::string> cell;
};

/// Immutable multi-cutoff RD sample. A Dataset is always a view: a list of
/// row ids into shared column storage. Subsetting never copies or mutates the
/// underlying columns, so views are cheap and safe to share across threads.
class Dataset {
public:
  Dataset() = default;

  static Dataset from_observations(std::vector<Observation> obs, Design design,
                                   std::vector<std::string> covariate_names = {});

  std::size_t size() const noexcept { return rows_ ? rows_->size() : 0; }
  bool empty() const noexcept { return size() == 0; }

  double y(std::size_t i) const { return store_->y[(*rows_)[i]]; }
  double x(std::size_t i) const { return store_->x[(*rows_)[i]]; }
  double c(std::size_t i) const { return store_->c[(*rows_)[i]]; }
  int d(std::size_t i) const { return store_->d[(*rows_)[i]]; }
  /// Joined covariate labels of row i; empty when there are no covariates.
  const std::string& cell_key(std::size_t i) const { return store_->cell[(*rows_)[i]]; }
  /// Storage row id of view position i (stable across subsets).
  std::uint32_t row_id(std::size_t i) const { return (*rows_)[i]; }
  std::span<const std::uint32_t> row_ids() const {
    return rows_ ? std::span<const std::uint32_t>(*rows_) : std::span<const std::uint32_t>();
  }

  Observation observation(std::size_t i) const;

  /// Cutoff set of the parent sample, ascending and distinct.
  const std::vector<double>& cutoffs() const noexcept { return cutoffs_; }
  Design design() const noexcept { return design_; }
  const std::vector<std::string>& covariate_names() const { return store_->z_names; }
  bool has_covariates() const { return store_ && !store_->z_names.empty(); }
  /// Distinct covariate cell keys present in this view, sorted.
  std::vector<std::string> covariate_cells() const;

  Dataset subset(const RowFilter& filter) const;
  /// View made of the given view positions, in the given order.
  Dataset select(std::span<const std::size_t> positions) const;

  /// Normalized-and-pooled copy: scores recentered at each unit's cutoff,
  /// every cutoff replaced by 0.
  Dataset normalized() const;
  /// Copy of this view with the outcome column replaced (one value per
  /// view position). Used to regress other variables (treatment, group
  /// membership) on the score with the same machinery.
  Dataset with_outcomes(std::span<const double> y) const;

  /// Identity of (storage, row list); two views with equal fingerprints
  /// address the same rows of the same storage.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  const void* storage_id() const noexcept { return store_.get(); }

  bool has_cutoff(double c) const;

private:
  struct Storage {
    std::vector<double> y, x, c;
    std::vector<int> d;
    std::vector<std::vector<std::string>> z;
    std::vector<std::string> z_names;
    std::vector<std::string> cell;
  };

  Dataset(std::shared_ptr<const Storage> store,
          std::shared_ptr<const std::vector<std::uint32_t>> rows,
          std::vector<double> cutoffs, Design design);

  std::shared_ptr<const Storage> store_;
  std::shared_ptr<const std::vector<std::uint32_t>> rows_;
  std::vector<double> cutoffs_;
  Design design_ = Design::Sharp;
  std::uint64_t fingerprint_ = 0;
};

/// Ordered cutoff pair (low < high), both members of the dataset's cutoffs.
struct CutoffPair {
  double low = 0.0;
  double high = 0.0;
};

CutoffPair make_pair(const Dataset& ds, double low, double high);

Dataset read_csv(std::istream& in, const ColumnMap& columns, Design design);
Dataset load_dataset(const std::string& path, const ColumnMap& columns, Design design);
/// Writes y,x,c,d and covariate columns with round-trip precision.
void write_csv(std::ostream& out, const Dataset& ds);

}  // namespace rdx
