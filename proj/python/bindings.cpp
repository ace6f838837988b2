#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "hiergen/attention.hpp"
#include "hiergen/data.hpp"
#include "hiergen/metrics.hpp"
#include "hiergen/model.hpp"
#include "hiergen/tensor.hpp"
#include "hiergen/toy.hpp"
#include "hiergen/training.hpp"
#include "hiergen/transformer.hpp"

namespace py = pybind11;
using namespace hiergen;

namespace {

using Matrix = std::vector<std::vector<double>>;

Tensor matrix_tensor(const Matrix& rows) {
  const int m = static_cast<int>(rows.size());
  const int n = static_cast<int>(rows.at(0).size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m) * n);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != n) throw std::invalid_argument("ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor::from({m, n}, std::move(flat));
}

Matrix tensor_matrix(const Tensor& t) {
  Matrix out(static_cast<std::size_t>(t.rows()));
  for (int i = 0; i < t.rows(); ++i) {
    out[static_cast<std::size_t>(i)].assign(
        t.data().begin() + static_cast<std::size_t>(i) * t.cols(),
        t.data().begin() + static_cast<std::size_t>(i + 1) * t.cols());
  }
  return out;
}

std::vector<double> py_sparsemax(const std::vector<double>& v) {
  NoGradGuard ng;
  return sparsemax(Tensor::from({static_cast<int>(v.size())}, v)).data();
}

std::vector<double> py_softmax(const std::vector<double>& v) {
  NoGradGuard ng;
  return softmax(Tensor::from({static_cast<int>(v.size())}, v)).data();
}

std::vector<double> py_hatt(const std::vector<double>& q_s, const std::vector<double>& q_w,
                            const Matrix& k_s, const std::vector<Matrix>& k_w,
                            const std::vector<Matrix>& v_w, double scale) {
  NoGradGuard ng;
  HattInputs in;
  in.q_s = Tensor::from({static_cast<int>(q_s.size())}, q_s);
  in.q_w = Tensor::from({static_cast<int>(q_w.size())}, q_w);
  in.K_s = matrix_tensor(k_s);
  for (const auto& m : k_w) in.K_w.push_back(matrix_tensor(m));
  for (const auto& m : v_w) in.V_w.push_back(matrix_tensor(m));
  return hatt(in, scale).context.data();
}

Matrix py_positional_encoding(int length, int d_model) {
  return tensor_matrix(positional_encoding(length, d_model));
}

std::string py_bio_tag(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& answer) {
  std::string out;
  for (Bio b : bio_tag(tokens, answer)) out.push_back(bio_char(b));
  return out;
}

double py_gradcheck_toy(const std::string& arch, int coords_per_group) {
  ToySetup toy = make_toy_setup(arch);
  auto model = build_model(toy.config);
  return gradcheck(*model, toy.instance, 1e-5, 1e-3, coords_per_group).max_rel_err;
}

double py_toy_loss(const std::string& arch) {
  NoGradGuard ng;
  ToySetup toy = make_toy_setup(arch);
  auto model = build_model(toy.config);
  return model->forward_loss({toy.instance}).item();
}

}  // namespace

PYBIND11_MODULE(_hiergen, m) {
  m.doc() = "hierarchical paragraph encoders for question generation";

  m.def("sparsemax", &py_sparsemax, py::arg("scores"),
        "Euclidean projection of a score vector onto the probability simplex");
  m.def("softmax", &py_softmax, py::arg("scores"));
  m.def("hatt", &py_hatt, py::arg("q_s"), py::arg("q_w"), py::arg("k_s"), py::arg("k_w"),
        py::arg("v_w"), py::arg("scale"),
        "hierarchical attention context over per-sentence word keys/values");
  m.def("positional_encoding", &py_positional_encoding, py::arg("length"), py::arg("d_model"));

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("sentence_split", &sentence_split, py::arg("text"));
  m.def("bio_tag", &py_bio_tag, py::arg("tokens"), py::arg("answer"),
        "BIO tags of the leftmost answer occurrence, as a B/I/O string");

  m.def("lcs_length", &lcs_length, py::arg("a"), py::arg("b"));
  m.def("bleu",
        [](const std::vector<TokenSeq>& h, const std::vector<TokenSeq>& r, int k) {
          return bleu(h, r, k);
        },
        py::arg("hypotheses"), py::arg("references"), py::arg("max_order") = 4);
  m.def("rouge_l",
        [](const std::vector<TokenSeq>& h, const std::vector<TokenSeq>& r, double beta2) {
          return rouge_l(h, r, beta2);
        },
        py::arg("hypotheses"), py::arg("references"), py::arg("beta2") = 1.2);

  m.def("gradcheck_toy", &py_gradcheck_toy, py::arg("arch"), py::arg("coords_per_group") = 10,
        "max relative gradient error of the built-in toy instance");
  m.def("toy_loss", &py_toy_loss, py::arg("arch"),
        "untrained teacher-forced loss of the built-in toy instance");

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("bleu1", &EvalReport::bleu1)
      .def_readonly("bleu2", &EvalReport::bleu2)
      .def_readonly("bleu3", &EvalReport::bleu3)
      .def_readonly("bleu4", &EvalReport::bleu4)
      .def_readonly("rouge_l", &EvalReport::rouge_l)
      .def_readonly("n_instances", &EvalReport::n_instances)
      .def_readonly("brevity_penalty", &EvalReport::brevity_penalty);
  m.def("evaluate_corpus",
        [](const std::vector<TokenSeq>& h, const std::vector<TokenSeq>& r) {
          return evaluate_corpus(h, r);
        },
        py::arg("hypotheses"), py::arg("references"));
}
