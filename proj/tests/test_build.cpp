#include <doctest.h>

#include "multee/harness.hpp"

TEST_CASE("instantiate") {
  multee::SyntheticDataConfig c;
  c.qa.n_questions = 4;
  c.qa_dev = 2;
  c.nli.n_examples = 6;
  c.nli_dev = 3;
  auto data = multee::synthetic_data(c);
  multee::ModelConfig m;
  m.dims = {static_cast<int>(data.vocab.size()), 8, 8};
  auto model = multee::make_model<float>(m, data.vocab);
  auto e = multee::evaluate_qa(*model, data.qa_dev);
  CHECK(e.metrics.accuracy.has_value());
}
