// Builds a synthetic notion dataset, writes it to disk, runs every method on it
// and prints the comparison table.
//
//   synthetic_demo [output-dir]

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "indirect/experiment.hpp"
#include "indirect/synthetic.hpp"

int main(int argc, char** argv) {
  using namespace indirect;
  const std::string dir = argc > 1 ? argv[1] : (std::filesystem::temp_directory_path() / "indirect_demo").string();
  try {
    SyntheticConfig sc;
    sc.dim = 64;
    sc.notion_dim = 4;
    sc.classes = 8;
    sc.images_per_class = 40;
    sc.prompts = 48;
    const auto files = write_synthetic_dataset(make_synthetic_dataset(sc), dir);
    std::cout << "data written to " << dir << "\n\n";

    ExperimentConfig c;
    c.text_embeddings = files.texts;
    c.image_embeddings = files.images;
    c.labels = files.labels;
    c.target_dim = 8;
    c.seeds = {0, 1, 2};
    c.ae_hidden = 32;
    const auto data = load_experiment_data(c);

    std::vector<RetrievalReport> reports;
    for (Method m : kAllMethods) {
      c.method = m;
      reports.push_back(run_experiment(c, data));
    }
    std::cout << render_table(reports);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
