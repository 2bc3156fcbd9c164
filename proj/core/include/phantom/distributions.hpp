#pragma once

namespace phantom::dist {

/// P(X > x) for X ~ chi-square(df). Returns 1 for x <= 0.
double chi_square_upper(double x, double df);

double normal_cdf(double x);
double normal_quantile(double p);

/// Two-sided standard-normal tail probability 2 * P(Z > |z|).
double normal_two_sided(double z);

/// Two-sided Student t tail probability.
double student_t_two_sided(double t, double df);

/// P(X <= x) for X lognormal with log-mean `mu` and log-sd `sigma`.
double lognormal_cdf(double x, double mu, double sigma);

/// Smallest k with P(X <= k) >= q for X ~ Binomial(trials, p).
unsigned binomial_quantile(unsigned trials, double p, double q);

}  // namespace phantom::dist
