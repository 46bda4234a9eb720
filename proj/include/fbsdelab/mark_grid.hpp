#ifndef FBSDELAB_MARK_GRID_HPP
#define FBSDELAB_MARK_GRID_HPP

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fbsde {

/// Flattened enumeration of the finite mark cells across channels. Cell
/// order is channel-ascending, then mark-law order; every module that
/// indexes U by cell uses this enumeration.
class MarkGrid {
  public:
    struct Cell {
        int channel = 0;
        double mark = 0.0;
        double prob = 1.0;
    };

    MarkGrid() { set_laws({{{1.0, 1.0}}}); }
    explicit MarkGrid(std::vector<std::vector<std::pair<double, double>>> laws) {
        set_laws(std::move(laws));
    }

    // unmarked l-channel case: mark identically 1 on each channel
    static MarkGrid unmarked(int n_channels) {
        std::vector<std::vector<std::pair<double, double>>> laws(
            static_cast<std::size_t>(n_channels), {{1.0, 1.0}});
        return MarkGrid(std::move(laws));
    }

    int n_channels() const { return static_cast<int>(laws_.size()); }
    int n_cells() const { return static_cast<int>(cells_.size()); }
    const std::vector<Cell>& cells() const { return cells_; }
    const Cell& cell(int c) const { return cells_[static_cast<std::size_t>(c)]; }
    const std::vector<std::vector<std::pair<double, double>>>& laws() const { return laws_; }

    int cell_of(int channel, double mark, double tol = 1e-9) const {
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            if (cells_[c].channel == channel && std::fabs(cells_[c].mark - mark) <= tol)
                return static_cast<int>(c);
        }
        throw std::runtime_error("MarkGrid: event mark not in the declared mark law");
    }

  private:
    void set_laws(std::vector<std::vector<std::pair<double, double>>> laws) {
        laws_ = std::move(laws);
        cells_.clear();
        for (std::size_t j = 0; j < laws_.size(); ++j)
            for (const auto& [mark, prob] : laws_[j])
                cells_.push_back({static_cast<int>(j), mark, prob});
    }

    std::vector<std::vector<std::pair<double, double>>> laws_;
    std::vector<Cell> cells_;
};

}  // namespace fbsde

#endif
