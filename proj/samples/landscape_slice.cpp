// Solves a scene, slices the loss landscape through the initial point and
// the solution, and prints the isoband areas of the objective.
//
//   landscape_slice [scene-file-or-problem-name]

#include "nlpvis/analytics.hpp"
#include "nlpvis/problem_suite.hpp"
#include "nlpvis/solver.hpp"

#include <cstdio>
#include <exception>

int main(int argc, char** argv) {
  try {
    const auto problem = nlpvis::resolve_problem(argc > 1 ? argv[1] : "waypoint_T20");
    const auto result = nlpvis::solve(problem);
    std::printf("%s: converged=%d feasible=%d outer=%zu\n", problem.name().c_str(), result.converged,
                result.feasible, result.outer_iterations);

    std::vector<nlpvis::Vector> points;
    for (const auto& p : nlpvis::optimization_trajectory(result.trace)) points.push_back(p.x);
    const auto plane = nlpvis::default_plane(points, 0);
    const auto grid = nlpvis::sample_grid(problem, plane, 48, 48, {"objective"}, result.duals);
    const auto& f = grid.field("objective");
    const auto levels = nlpvis::quantile_levels(f.values);
    const auto bands = nlpvis::isobands(grid.geometry, f.values, levels);

    std::printf("|S| = %zu, window s [%.3g, %.3g] t [%.3g, %.3g]\n", points.size(), plane.window.s_min,
                plane.window.s_max, plane.window.t_min, plane.window.t_max);
    for (const auto& b : bands.bands) {
      std::printf("  [%10.4g, %10.4g]  area %8.4f  polygons %zu\n", b.lower, b.upper, b.area(), b.polygons.size());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
