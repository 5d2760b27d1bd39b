#include <fstream>
#include <iomanip>
#include <sstream>

#include "ctcam/criteria.h"

namespace ctcam {

void Lattice::Validate() const {
  if (node_frame.empty()) ThrowData("no paths: lattice has no nodes");
  if (node_frame[0] != 0) ThrowData("lattice start node must sit at frame 0");
  for (const auto& a : arcs) {
    if (a.from < 0 || a.from >= num_nodes() || a.to < 0 || a.to >= num_nodes()) {
      ThrowData("lattice arc references a missing node");
    }
    if (node_frame[a.to] <= node_frame[a.from]) {
      ThrowData("lattice arc does not advance time");
    }
    if (!std::isfinite(a.am_score) || !std::isfinite(a.lm_score)) {
      ThrowData("lattice arc has a non-finite score");
    }
  }
  for (int f : finals) {
    if (f < 0 || f >= num_nodes()) ThrowData("lattice final references a missing node");
  }
}

std::string Lattice::ToText() const {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int n = 0; n < num_nodes(); ++n) os << "node " << n << ' ' << node_frame[n] << '\n';
  for (const auto& a : arcs) {
    os << "arc " << a.from << ' ' << a.to << ' ' << a.label << ' ' << a.am_score << ' '
       << a.lm_score << '\n';
  }
  for (int f : finals) os << "final " << f << '\n';
  return os.str();
}

Lattice Lattice::FromText(const std::string& text) {
  Lattice lat;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    auto fail = [&]() {
      ThrowData("lattice line " + std::to_string(lineno) + " is malformed: " + line);
    };
    if (kind == "node") {
      int id = 0, frame = 0;
      if (!(ls >> id >> frame) || id < 0) fail();
      if (id >= lat.num_nodes()) lat.node_frame.resize(id + 1, -1);
      lat.node_frame[id] = frame;
    } else if (kind == "arc") {
      Arc a;
      if (!(ls >> a.from >> a.to >> a.label >> a.am_score >> a.lm_score)) fail();
      lat.arcs.push_back(a);
    } else if (kind == "final") {
      int id = 0;
      if (!(ls >> id)) fail();
      lat.finals.push_back(id);
    } else {
      fail();
    }
  }
  for (int f : lat.node_frame) {
    if (f < 0) ThrowData("lattice node ids are not dense");
  }
  lat.Validate();
  return lat;
}

void Lattice::Write(const std::string& path) const {
  std::ofstream os(path);
  if (!os) ThrowData("cannot write lattice " + path);
  os << ToText();
}

Lattice Lattice::Read(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open lattice " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return FromText(ss.str());
}

}  // namespace ctcam
