// SPDX-License-Identifier: Apache-2.0

#include "recolor/losses.hpp"

#include <json.hpp>

namespace recolor {

using nlohmann::json;

void LossWeights::validate() const {
  check(lambda_perc >= 0 && lambda_context >= 0 && lambda_smooth >= 0 &&
            lambda_adv >= 0 && lambda_temporal >= 0 && lambda_l1 >= 0,
        "LossWeights: lambdas must be non-negative");
  check(tau > 0, "LossWeights: tau must be positive");
  check(h > 0, "LossWeights: bandwidth h must be positive");
  check(eps > 0, "LossWeights: eps must be positive");
  check(sigma_g > 0, "LossWeights: sigma_g must be positive");
  check(contextual_max_positions > 0,
        "LossWeights: contextual_max_positions must be positive");
  for (double w : w_level)
    check(w >= 0, "LossWeights: level weights must be non-negative");
}

std::string LossWeights::to_json() const {
  json j;
  j["lambda_perc"] = lambda_perc;
  j["lambda_context"] = lambda_context;
  j["lambda_smooth"] = lambda_smooth;
  j["lambda_adv"] = lambda_adv;
  j["lambda_temporal"] = lambda_temporal;
  j["lambda_l1"] = lambda_l1;
  j["tau"] = tau;
  j["h"] = h;
  j["eps"] = eps;
  j["sigma_g"] = sigma_g;
  j["w_level"] = {w_level[0], w_level[1], w_level[2], w_level[3]};
  j["contextual_max_positions"] = contextual_max_positions;
  j["smooth_norm"] = smooth_norm == LossNorm::l1 ? "l1" : "l2";
  j["temporal_norm"] = temporal_norm == LossNorm::l1 ? "l1" : "l2";
  return j.dump();
}

LossWeights LossWeights::from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  LossWeights lw;
  auto opt = [&j](const char* key, double dflt) {
    return j.contains(key) ? j.at(key).get<double>() : dflt;
  };
  lw.lambda_perc = opt("lambda_perc", lw.lambda_perc);
  lw.lambda_context = opt("lambda_context", lw.lambda_context);
  lw.lambda_smooth = opt("lambda_smooth", lw.lambda_smooth);
  lw.lambda_adv = opt("lambda_adv", lw.lambda_adv);
  lw.lambda_temporal = opt("lambda_temporal", lw.lambda_temporal);
  lw.lambda_l1 = opt("lambda_l1", lw.lambda_l1);
  lw.tau = opt("tau", lw.tau);
  lw.h = opt("h", lw.h);
  lw.eps = opt("eps", lw.eps);
  lw.sigma_g = opt("sigma_g", lw.sigma_g);
  if (j.contains("w_level")) {
    const auto arr = j.at("w_level");
    check(arr.size() == 4, "LossWeights: w_level must have 4 entries");
    for (int i = 0; i < 4; ++i) lw.w_level[i] = arr.at(i).get<double>();
  }
  if (j.contains("contextual_max_positions"))
    lw.contextual_max_positions = j.at("contextual_max_positions").get<int>();
  auto norm_of = [&j](const char* key, LossNorm dflt) {
    if (!j.contains(key)) return dflt;
    const std::string s = j.at(key).get<std::string>();
    check(s == "l1" || s == "l2", std::string("LossWeights: bad norm ") + s);
    return s == "l1" ? LossNorm::l1 : LossNorm::l2;
  };
  lw.smooth_norm = norm_of("smooth_norm", lw.smooth_norm);
  lw.temporal_norm = norm_of("temporal_norm", lw.temporal_norm);
  lw.validate();
  return lw;
}

std::string LossReport::to_json_line(int64_t step) const {
  json j;
  j["step"] = step;
  j["perceptual"] = perceptual;
  j["contextual"] = contextual;
  j["smooth"] = smooth;
  j["adv_g"] = adv_g;
  j["adv_d"] = adv_d;
  j["temporal"] = temporal;
  j["l1"] = l1;
  j["l1_active"] = l1_active;
  j["adv_active"] = adv_active;
  j["total"] = total;
  return j.dump();
}

}  // namespace recolor
