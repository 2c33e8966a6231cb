#pragma once

#include "npole/dictionary.hpp"
#include "npole/npole.hpp"

#include <span>
#include <vector>

namespace npole::detail {

/// Lag dictionary for a fit, optionally crossed with an aux lattice.
Dictionary make_dictionary(const HyperParams& h, Kernel aux_kernel = Kernel::gaussian(1.0),
                           std::vector<double> aux_points = {}, std::size_t aux_dim = 0);

/// fit() on a caller-built dictionary; event n enters on aux point event_aux[n].
FitResult fit_on_dictionary(const EventStream& stream, const HyperParams& hyper, const FitOptions& options,
                            const Dictionary& dict, std::span<const std::size_t> event_aux);

}  // namespace npole::detail
