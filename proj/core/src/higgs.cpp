#include "hitchin/higgs.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace hitchin::higgs {

using lattice::BasisTerm;

EndoFormField::EndoFormField(const Domain& domain, int rank, int p, int q)
    : form_(domain, p, q, rank * rank), rank_(rank) {
  if (rank < 1 || rank > kMaxRank) throw RankOverflowError("rank must be between 1 and 16");
}

EndoFormField::EndoFormField(FormField form, int rank) : form_(std::move(form)), rank_(rank) {
  if (form_.fibre() != rank * rank) throw ShapeMismatchError("fibre does not match rank^2");
}

EndoFormField& EndoFormField::operator+=(const EndoFormField& o) {
  form_ += o.form_;
  return *this;
}
EndoFormField& EndoFormField::operator-=(const EndoFormField& o) {
  form_ -= o.form_;
  return *this;
}
EndoFormField& EndoFormField::operator*=(cd s) {
  form_ *= s;
  return *this;
}
EndoFormField operator+(EndoFormField a, const EndoFormField& b) { return a += b; }
EndoFormField operator-(EndoFormField a, const EndoFormField& b) { return a -= b; }
EndoFormField operator*(cd s, EndoFormField a) { return a *= s; }

HermitianMetricField::HermitianMetricField(const Domain& domain, int rank, bool sl_mode)
    : domain_(domain), rank_(rank), sl_mode_(sl_mode) {
  if (rank < 1 || rank > kMaxRank) throw RankOverflowError("rank must be between 1 and 16");
  data_.assign(domain.sites() * rank * rank, cd(0.0));
  for (std::size_t s = 0; s < domain.sites(); ++s)
    for (int i = 0; i < rank; ++i) data_[s * rank * rank + i * rank + i] = 1.0;
}

void HermitianMetricField::validate(double herm_tol, double max_condition) const {
  for (std::size_t s = 0; s < sites(); ++s) {
    Mat h = at(s);
    double scale = std::max(1.0, h.norm());
    if ((h - h.adjoint()).norm() > herm_tol * scale) {
      std::ostringstream os;
      os << "metric is not Hermitian at site " << s;
      throw ConditioningError(os.str());
    }
    metric_frame(h, max_condition);
  }
}

double HermitianMetricField::max_det_deviation() const {
  double m = 0;
  for (std::size_t s = 0; s < sites(); ++s) m = std::max(m, std::abs(Mat(at(s)).determinant() - 1.0));
  return m;
}

MetricFrame metric_frame(const Mat& H, double max_condition) {
  const int r = static_cast<int>(H.rows());
  Mat hs = 0.5 * (H + H.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(hs);
  const auto& ev = es.eigenvalues();
  double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (!(lo > 0) || !(hi / lo <= max_condition) || !std::isfinite(hi)) {
    std::ostringstream os;
    os << "metric is singular or ill-conditioned (eigenvalues " << lo << " .. " << hi << ")";
    throw ConditioningError(os.str());
  }
  MetricFrame f;
  const Mat& v = es.eigenvectors();
  Mat ds = Mat::Zero(r, r), dsi = Mat::Zero(r, r), di = Mat::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    ds(i, i) = std::sqrt(ev(i));
    dsi(i, i) = 1.0 / std::sqrt(ev(i));
    di(i, i) = 1.0 / ev(i);
  }
  f.H = hs;
  f.G = v * ds * v.adjoint();
  f.Ginv = v * dsi * v.adjoint();
  f.Hinv = v * di * v.adjoint();
  return f;
}

Mat h_adjoint(const Mat& A, const Mat& H, const Mat& Hinv) { return Hinv * A.adjoint() * H; }

double h_norm_sq(const Mat& A, const Mat& H, const Mat& Hinv) {
  return std::max(0.0, (A * Hinv * A.adjoint() * H).trace().real());
}

double h_norm(const Mat& A, const Mat& H) {
  Mat hinv = H.inverse();
  return std::sqrt(h_norm_sq(A, H, hinv));
}

namespace {

std::vector<MetricFrame> frames(const HermitianMetricField& H) {
  std::vector<MetricFrame> out(H.sites());
  for (std::size_t s = 0; s < H.sites(); ++s) out[s] = metric_frame(H.at(s));
  return out;
}

void require_same(const EndoFormField& a, const EndoFormField& b) {
  if (a.rank() != b.rank() || !a.domain().same_as(b.domain()))
    throw ShapeMismatchError("End-valued fields differ in rank or domain");
}

}  // namespace

EndoFormField adjoint_wrt(const HermitianMetricField& H, const EndoFormField& phi) {
  if (H.rank() != phi.rank() || !H.domain().same_as(phi.domain()))
    throw ShapeMismatchError("metric and field differ in rank or domain");
  auto fr = frames(H);
  const int p = phi.p(), q = phi.q();
  EndoFormField out(phi.domain(), phi.rank(), q, p);
  // conj(dz_I ^ dzbar_J) = dzbar_I ^ dz_J = (-1)^{pq} dz_J ^ dzbar_I
  const double sign = (p * q) % 2 ? -1.0 : 1.0;
  for (int c = 0; c < phi.components(); ++c) {
    int oc = out.basis().index(phi.basis().anti(c), phi.basis().holo(c));
    for (std::size_t s = 0; s < phi.sites(); ++s)
      out.at(s, oc) = sign * h_adjoint(phi.at(s, c), fr[s].H, fr[s].Hinv);
  }
  return out;
}

EndoFormField wedge(const EndoFormField& a, const EndoFormField& b) {
  require_same(a, b);
  const int n = a.domain().complex_dim();
  if (a.p() + b.p() > n || a.q() + b.q() > n) throw InvalidDegreeError("wedge exceeds the top degree");
  EndoFormField out(a.domain(), a.rank(), a.p() + b.p(), a.q() + b.q());
  for (int ca = 0; ca < a.components(); ++ca)
    for (int cb = 0; cb < b.components(); ++cb) {
      BasisTerm t = lattice::wedge_basis(a.basis(), ca, b.basis(), cb, out.basis());
      if (t.sign == 0) continue;
      const double sg = t.sign;
      for (std::size_t s = 0; s < a.sites(); ++s) out.at(s, t.comp).noalias() += sg * (a.at(s, ca) * b.at(s, cb));
    }
  return out;
}

EndoFormField graded_bracket(const EndoFormField& a, const EndoFormField& b) {
  EndoFormField ab = wedge(a, b);
  EndoFormField ba = wedge(b, a);
  const int da = a.p() + a.q(), db = b.p() + b.q();
  if ((da * db) % 2)
    ab += ba;
  else
    ab -= ba;
  return ab;
}

EndoFormField wedge_square(const EndoFormField& phi) {
  if (phi.p() != 1 || phi.q() != 0) throw InvalidDegreeError("wedge_square expects a (1,0) field");
  if (phi.domain().complex_dim() < 2) return EndoFormField();
  return wedge(phi, phi);
}

EndoFormField bracket(const EndoFormField& phi, const EndoFormField& psi) {
  if (phi.p() != 1 || phi.q() != 0 || psi.p() != 0 || psi.q() != 1)
    throw InvalidDegreeError("bracket expects a (1,0) and a (0,1) field");
  return graded_bracket(phi, psi);
}

EndoFormField lambda(const EndoFormField& a) { return EndoFormField(lattice::lambda(a.form()), a.rank()); }

std::vector<double> pointwise_norm(const HermitianMetricField& H, const EndoFormField& a) {
  if (H.rank() != a.rank()) throw ShapeMismatchError("metric and field differ in rank");
  std::vector<double> out(a.sites());
  const double w = a.basis().norm_sq();
  for (std::size_t s = 0; s < a.sites(); ++s) {
    MetricFrame f = metric_frame(H.at(s));
    double acc = 0;
    for (int c = 0; c < a.components(); ++c) acc += h_norm_sq(a.at(s, c), f.H, f.Hinv);
    out[s] = std::sqrt(w * acc);
  }
  return out;
}

std::vector<double> pointwise_norm(const EndoFormField& a) {
  std::vector<double> out(a.sites());
  const double w = a.basis().norm_sq();
  for (std::size_t s = 0; s < a.sites(); ++s) {
    double acc = 0;
    for (int c = 0; c < a.components(); ++c) acc += a.at(s, c).squaredNorm();
    out[s] = std::sqrt(w * acc);
  }
  return out;
}

namespace {

double l2_from_pointwise(const Domain& dom, const std::vector<double>& pw) {
  double acc = 0;
  for (std::size_t s = 0; s < dom.sites(); ++s) acc += dom.weight(s) * pw[s] * pw[s];
  return std::sqrt(acc);
}

}  // namespace

double l2_norm(const HermitianMetricField& H, const EndoFormField& a) {
  return l2_from_pointwise(a.domain(), pointwise_norm(H, a));
}

double l2_norm(const EndoFormField& a) { return l2_from_pointwise(a.domain(), pointwise_norm(a)); }

EndoFormField tensor_product(const EndoFormField& phi1, const EndoFormField& phi2, int max_rank) {
  if (!phi1.domain().same_as(phi2.domain())) throw ShapeMismatchError("tensor factors live on different domains");
  if (phi1.p() != phi2.p() || phi1.q() != phi2.q()) throw InvalidDegreeError("tensor factors differ in bidegree");
  const int r1 = phi1.rank(), r2 = phi2.rank();
  if (r1 * r2 > max_rank || r1 * r2 > kMaxRank) throw RankOverflowError("tensor product rank exceeds the configured maximum");
  EndoFormField out(phi1.domain(), r1 * r2, phi1.p(), phi1.q());
  for (std::size_t s = 0; s < phi1.sites(); ++s)
    for (int c = 0; c < phi1.components(); ++c) {
      ConstMatMap a = phi1.at(s, c);
      ConstMatMap b = phi2.at(s, c);
      MatMap o = out.at(s, c);
      for (int i1 = 0; i1 < r1; ++i1)
        for (int i2 = 0; i2 < r2; ++i2)
          for (int j1 = 0; j1 < r1; ++j1)
            for (int j2 = 0; j2 < r2; ++j2) {
              cd v = 0.0;
              if (i2 == j2) v += a(i1, j1);
              if (i1 == j1) v += b(i2, j2);
              o(i1 * r2 + i2, j1 * r2 + j2) = v;
            }
    }
  return out;
}

}  // namespace hitchin::higgs
