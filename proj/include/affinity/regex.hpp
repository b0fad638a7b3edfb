#pragma once

// Small linear-time regular expression matcher used to derive affinity keys.
//
// Supported: literals, '.', bracket classes with ranges and negation, the
// escapes \d \D \w \W \s \S \t \n \r and escaped metacharacters, groups
// "(...)" and "(?:...)", alternation, the greedy quantifiers * + ? {m} {m,}
// {m,n}, and the anchors ^ $. Backreferences and lookaround are rejected.
//
// Matching is a Pike VM over bytes: threads are kept in priority order so the
// result is the leftmost match, and among those the one a backtracking engine
// with greedy quantifiers would pick.

#include <bitset>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "affinity/error.hpp"

namespace affinity {

struct MatchSpan {
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const MatchSpan&, const MatchSpan&) = default;
};

namespace regex_detail {

using ByteSet = std::bitset<256>;

struct Node {
  enum class Kind { Empty, Set, Begin, End, Concat, Alt, Repeat };
  Kind kind = Kind::Empty;
  ByteSet set;
  std::vector<std::unique_ptr<Node>> children;
  int min = 0;
  int max = -1;  // -1: unbounded
};

using NodePtr = std::unique_ptr<Node>;

inline constexpr int kMaxCount = 1000;

inline NodePtr make(Node::Kind kind) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  return n;
}

inline ByteSet digit_set() {
  ByteSet s;
  for (int c = '0'; c <= '9'; ++c) s.set(c);
  return s;
}

inline ByteSet word_set() {
  ByteSet s = digit_set();
  for (int c = 'a'; c <= 'z'; ++c) s.set(c);
  for (int c = 'A'; c <= 'Z'; ++c) s.set(c);
  s.set('_');
  return s;
}

inline ByteSet space_set() {
  ByteSet s;
  for (char c : std::string_view(" \t\n\r\f\v")) s.set(static_cast<unsigned char>(c));
  return s;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  NodePtr parse() {
    auto n = parse_alt();
    if (pos_ != src_.size()) fail("unexpected ')'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::BadRegex,
                "'" + std::string(src_) + "' at offset " + std::to_string(pos_) + ": " + what);
  }

  bool eof() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  NodePtr parse_alt() {
    auto first = parse_concat();
    if (eof() || peek() != '|') return first;
    auto alt = make(Node::Kind::Alt);
    alt->children.push_back(std::move(first));
    while (!eof() && peek() == '|') {
      ++pos_;
      alt->children.push_back(parse_concat());
    }
    return alt;
  }

  NodePtr parse_concat() {
    auto cat = make(Node::Kind::Concat);
    while (!eof() && peek() != '|' && peek() != ')') {
      cat->children.push_back(parse_repeat());
    }
    return cat;
  }

  NodePtr parse_repeat() {
    auto atom = parse_atom();
    bool quantified = false;
    while (!eof()) {
      int lo = 0;
      int hi = -1;
      char c = peek();
      if (c == '*') {
        ++pos_;
      } else if (c == '+') {
        lo = 1;
        ++pos_;
      } else if (c == '?') {
        hi = 1;
        ++pos_;
      } else if (c == '{') {
        parse_braces(lo, hi);
      } else {
        break;
      }
      if (quantified) fail("stacked quantifiers are not supported");
      if (atom->kind == Node::Kind::Begin || atom->kind == Node::Kind::End) {
        fail("quantifier applied to an anchor");
      }
      quantified = true;
      auto rep = make(Node::Kind::Repeat);
      rep->min = lo;
      rep->max = hi;
      rep->children.push_back(std::move(atom));
      atom = std::move(rep);
    }
    return atom;
  }

  int parse_int() {
    std::size_t start = pos_;
    long v = 0;
    while (!eof() && peek() >= '0' && peek() <= '9') {
      v = v * 10 + (peek() - '0');
      if (v > kMaxCount) fail("repeat count too large");
      ++pos_;
    }
    if (start == pos_) fail("expected a repeat count");
    return static_cast<int>(v);
  }

  void parse_braces(int& lo, int& hi) {
    ++pos_;  // '{'
    lo = parse_int();
    hi = lo;
    if (!eof() && peek() == ',') {
      ++pos_;
      hi = (!eof() && peek() == '}') ? -1 : parse_int();
    }
    if (eof() || peek() != '}') fail("unterminated repeat count");
    ++pos_;
    if (hi != -1 && hi < lo) fail("repeat bounds out of order");
  }

  NodePtr set_node(const ByteSet& s) {
    auto n = make(Node::Kind::Set);
    n->set = s;
    return n;
  }

  NodePtr parse_atom() {
    if (eof()) fail("unexpected end of pattern");
    char c = peek();
    switch (c) {
      case '(': {
        ++pos_;
        if (!eof() && peek() == '?') {
          if (pos_ + 1 < src_.size() && src_[pos_ + 1] == ':') {
            pos_ += 2;
          } else {
            fail("lookaround and inline flags are not supported");
          }
        }
        auto inner = parse_alt();
        if (eof() || peek() != ')') fail("missing ')'");
        ++pos_;
        return inner;
      }
      case ')':
        fail("unbalanced ')'");
      case '*':
      case '+':
      case '?':
      case '{':
        fail("quantifier without operand");
      case '[':
        return parse_class();
      case '.': {
        ++pos_;
        ByteSet s;
        s.set();
        s.reset('\n');
        return set_node(s);
      }
      case '^':
        ++pos_;
        return make(Node::Kind::Begin);
      case '$':
        ++pos_;
        return make(Node::Kind::End);
      case '\\': {
        ++pos_;
        return set_node(parse_escape(false));
      }
      default: {
        ++pos_;
        ByteSet s;
        s.set(static_cast<unsigned char>(c));
        return set_node(s);
      }
    }
  }

  ByteSet parse_escape(bool in_class) {
    if (eof()) fail("dangling backslash");
    char c = src_[pos_++];
    ByteSet s;
    switch (c) {
      case 'd': return digit_set();
      case 'D': return ~digit_set();
      case 'w': return word_set();
      case 'W': return ~word_set();
      case 's': return space_set();
      case 'S': return ~space_set();
      case 't': s.set('\t'); return s;
      case 'n': s.set('\n'); return s;
      case 'r': s.set('\r'); return s;
      case 'f': s.set('\f'); return s;
      case 'v': s.set('\v'); return s;
      default: break;
    }
    if (c >= '1' && c <= '9') fail("backreferences are not supported");
    if (c == 'b' || c == 'B') {
      if (in_class) {
        s.set('\b');
        return s;
      }
      fail("word-boundary assertions are not supported");
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')) {
      fail(std::string("unknown escape \\") + c);
    }
    s.set(static_cast<unsigned char>(c));
    return s;
  }

  // One class member. `single` is set when the member is exactly one byte,
  // which is what may appear at either end of a range.
  ByteSet parse_class_member(bool& single, unsigned char& out) {
    char c = src_[pos_];
    if (c == '\\') {
      ++pos_;
      ByteSet s = parse_escape(true);
      single = s.count() == 1;
      if (single) {
        for (int i = 0; i < 256; ++i) {
          if (s.test(i)) out = static_cast<unsigned char>(i);
        }
      }
      return s;
    }
    ++pos_;
    single = true;
    out = static_cast<unsigned char>(c);
    ByteSet s;
    s.set(out);
    return s;
  }

  NodePtr parse_class() {
    ++pos_;  // '['
    bool negate = false;
    if (!eof() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    ByteSet s;
    bool first = true;
    while (true) {
      if (eof()) fail("unterminated character class");
      if (peek() == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      bool single = false;
      unsigned char lo = 0;
      ByteSet member = parse_class_member(single, lo);
      if (single && pos_ + 1 < src_.size() && peek() == '-' && src_[pos_ + 1] != ']') {
        ++pos_;  // '-'
        bool single_hi = false;
        unsigned char hi = 0;
        parse_class_member(single_hi, hi);
        if (!single_hi) fail("invalid range endpoint");
        if (hi < lo) fail("character range out of order");
        for (int b = lo; b <= hi; ++b) s.set(b);
      } else {
        s |= member;
      }
    }
    if (negate) s = ~s;
    return set_node(s);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

struct Inst {
  enum class Op : std::uint8_t { Set, Split, Jmp, Begin, End, Match };
  Op op = Op::Match;
  std::uint32_t x = 0;  // Set: index into sets; Split/Jmp: primary target
  std::uint32_t y = 0;  // Split: secondary (lower priority) target
};

class Compiler {
 public:
  std::vector<Inst> prog;
  std::vector<ByteSet> sets;

  void emit_node(const Node& n) {
    switch (n.kind) {
      case Node::Kind::Empty:
        break;
      case Node::Kind::Set:
        sets.push_back(n.set);
        prog.push_back({Inst::Op::Set, static_cast<std::uint32_t>(sets.size() - 1), 0});
        break;
      case Node::Kind::Begin:
        prog.push_back({Inst::Op::Begin, 0, 0});
        break;
      case Node::Kind::End:
        prog.push_back({Inst::Op::End, 0, 0});
        break;
      case Node::Kind::Concat:
        for (const auto& c : n.children) emit_node(*c);
        break;
      case Node::Kind::Alt:
        emit_alt(n, 0);
        break;
      case Node::Kind::Repeat:
        emit_repeat(n);
        break;
    }
  }

 private:
  std::uint32_t pc() const { return static_cast<std::uint32_t>(prog.size()); }

  void emit_alt(const Node& n, std::size_t i) {
    if (i + 1 == n.children.size()) {
      emit_node(*n.children[i]);
      return;
    }
    std::uint32_t split = pc();
    prog.push_back({Inst::Op::Split, split + 1, 0});
    emit_node(*n.children[i]);
    std::uint32_t jmp = pc();
    prog.push_back({Inst::Op::Jmp, 0, 0});
    prog[split].y = pc();
    emit_alt(n, i + 1);
    prog[jmp].x = pc();
  }

  void emit_optional(const Node& body) {
    std::uint32_t split = pc();
    prog.push_back({Inst::Op::Split, split + 1, 0});
    emit_node(body);
    prog[split].y = pc();
  }

  void emit_repeat(const Node& n) {
    const Node& body = *n.children.front();
    for (int i = 0; i < n.min; ++i) emit_node(body);
    if (n.max == -1) {
      std::uint32_t split = pc();
      prog.push_back({Inst::Op::Split, split + 1, 0});
      emit_node(body);
      prog.push_back({Inst::Op::Jmp, split, 0});
      prog[split].y = pc();
      return;
    }
    // x{m,n}: nested optionals so that each extra copy is only tried after
    // the previous one matched.
    std::vector<std::uint32_t> splits;
    for (int i = n.min; i < n.max; ++i) {
      splits.push_back(pc());
      prog.push_back({Inst::Op::Split, pc() + 1, 0});
      emit_node(body);
    }
    for (auto s : splits) prog[s].y = pc();
  }
};

}  // namespace regex_detail

// Compiled pattern. Cheap to copy; immutable after construction.
class Pattern {
 public:
  explicit Pattern(std::string_view source) : source_(source) {
    regex_detail::Parser parser(source);
    auto ast = parser.parse();
    regex_detail::Compiler c;
    c.emit_node(*ast);
    c.prog.push_back({regex_detail::Inst::Op::Match, 0, 0});
    prog_ = std::make_shared<const std::vector<regex_detail::Inst>>(std::move(c.prog));
    sets_ = std::make_shared<const std::vector<regex_detail::ByteSet>>(std::move(c.sets));
  }

  const std::string& source() const noexcept { return source_; }

  // Leftmost match in `text`, if any.
  std::optional<MatchSpan> search(std::string_view text) const {
    using regex_detail::Inst;
    const auto& prog = *prog_;
    const auto& sets = *sets_;
    const std::size_t n = prog.size();

    struct Thread {
      std::uint32_t pc;
      std::size_t start;
    };
    struct List {
      std::vector<Thread> threads;
      std::vector<std::uint32_t> mark;  // generation stamp per pc
    };
    List clist{{}, std::vector<std::uint32_t>(n, 0)};
    List nlist{{}, std::vector<std::uint32_t>(n, 0)};
    std::uint32_t gen = 1;
    std::vector<Thread> stack;

    auto add = [&](List& list, std::uint32_t stamp, std::uint32_t pc0, std::size_t start, std::size_t at) {
      stack.clear();
      stack.push_back({pc0, start});
      while (!stack.empty()) {
        Thread t = stack.back();
        stack.pop_back();
        if (list.mark[t.pc] == stamp) continue;
        list.mark[t.pc] = stamp;
        const Inst& in = prog[t.pc];
        switch (in.op) {
          case Inst::Op::Jmp:
            stack.push_back({in.x, t.start});
            break;
          case Inst::Op::Split:
            // Push the lower-priority branch first so the primary is explored first.
            stack.push_back({in.y, t.start});
            stack.push_back({in.x, t.start});
            break;
          case Inst::Op::Begin:
            if (at == 0) stack.push_back({t.pc + 1, t.start});
            break;
          case Inst::Op::End:
            if (at == text.size()) stack.push_back({t.pc + 1, t.start});
            break;
          case Inst::Op::Set:
          case Inst::Op::Match:
            list.threads.push_back(t);
            break;
        }
      }
    };

    std::optional<MatchSpan> best;
    std::uint32_t cur_stamp = gen++;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (clist.threads.empty()) {
        if (best) break;
        cur_stamp = gen++;
      }
      if (!best) add(clist, cur_stamp, 0, i, i);
      std::uint32_t next_stamp = gen++;
      nlist.threads.clear();
      for (const Thread& t : clist.threads) {
        const Inst& in = prog[t.pc];
        if (in.op == Inst::Op::Match) {
          best = MatchSpan{t.start, i - t.start};
          break;  // lower-priority threads are cut
        }
        if (i < text.size() && sets[in.x].test(static_cast<unsigned char>(text[i]))) {
          add(nlist, next_stamp, t.pc + 1, t.start, i + 1);
        }
      }
      std::swap(clist, nlist);
      cur_stamp = next_stamp;
    }
    return best;
  }

 private:
  std::string source_;
  std::shared_ptr<const std::vector<regex_detail::Inst>> prog_;
  std::shared_ptr<const std::vector<regex_detail::ByteSet>> sets_;
};

}  // namespace affinity
