#include "phantom/distributions.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace phantom::dist {

double chi_square_upper(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

double normal_cdf(double x) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::normal(), x);
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

double normal_two_sided(double z) {
  if (std::isinf(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

double student_t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return 2.0 *
         boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
}

double lognormal_cdf(double x, double mu, double sigma) {
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::cdf(boost::math::lognormal(mu, sigma), x);
}

unsigned binomial_quantile(unsigned trials, double p, double q) {
  if (trials == 0) return 0;
  const boost::math::binomial_distribution<double> d(trials, p);
  unsigned k = 0;
  while (k < trials && boost::math::cdf(d, k) < q) ++k;
  return k;
}

}  // namespace phantom::dist
