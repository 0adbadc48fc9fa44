#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "evolgym/envs.hpp"
#include "evolgym/util.hpp"

namespace evolgym::envs {

namespace {


bool is_five_lowercase_letters(const std::string& word) {
  if (word.size() != 5) return false;
  return std::all_of(word.begin(), word.end(),
                     [](unsigned char c) { return std::islower(c) != 0; });
}

std::string strip_whitespace(const std::string& text) {
  std::string result;
  for (const char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      result.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return result;
}

}  // namespace

const protocol::EnvDescriptor& wordle_descriptor() {
  static const protocol::EnvDescriptor descriptor{
      "wordle", WordleWorld::kMaxRounds, protocol::RewardKind::kBinary,
      "You are an expert wordle player. Welcome to the game of Wordle. Your objective is to guess "
      "a hidden 5 letter word. You have 6 attempts to guess it correctly and you should try to "
      "guess it in as few attempts as possible. When guessing the word, you should format your "
      "word as a space separated sequence of letters, like \"s h i r e\" for example. After "
      "guessing the word, you will receive feedback from the game environment in the form of a "
      "sequence of 5 space separated letters like \"b y g g b\", where each letter indicates some "
      "information about the hidden word. The environment will return one of three letters - "
      "\"b\", \"g\", or \"y\" - for each letter in the word you guessed. We describe the meaning "
      "of each letter below:\n\n\"b\": If the environment returns a \"b\", it means that the "
      "letter at that position in your guessed word is not in the hidden word.\n\"y\": If the "
      "environment returns a \"y\", it means that the letter at that position in your guessed "
      "word is in the hidden word but is not in the correct position.\n\"g\": If the environment "
      "returns a \"g\", it means that the letter at that position in your guessed word is in the "
      "hidden word and is in the correct position.\n\nAs a note, if you guess an invalid word "
      "(e.g. not a 5 letter word or a word not in the vocabulary), the environment will respond "
      "with an \"invalid word\" message. In general though, you should use this information "
      "returned by the environment to update your belief about what the hidden word might be and "
      "adjust your next guess accordingly."};
  return descriptor;
}

std::string wordle_feedback(const std::string& target, const std::string& guess) {
  if (!is_five_lowercase_letters(target) || !is_five_lowercase_letters(guess)) {
    throw core::DomainError("wordle feedback requires two 5-letter lowercase words");
  }
  std::array<int, 26> remaining{};
  std::array<char, 5> marks{};
  for (int i = 0; i < 5; ++i) {
    if (guess[i] == target[i]) {
      marks[i] = 'g';
    } else {
      remaining[target[i] - 'a'] += 1;
    }
  }
  for (int i = 0; i < 5; ++i) {
    if (marks[i] == 'g') continue;
    int& count = remaining[guess[i] - 'a'];
    if (count > 0) {
      marks[i] = 'y';
      count -= 1;
    } else {
      marks[i] = 'b';
    }
  }
  std::string feedback;
  for (int i = 0; i < 5; ++i) {
    if (i > 0) feedback.push_back(' ');
    feedback.push_back(marks[i]);
  }
  return feedback;
}

WordleWorld::WordleWorld(std::vector<std::string> vocabulary, std::string target)
    : vocabulary_(std::move(vocabulary)), target_(std::move(target)) {
  std::sort(vocabulary_.begin(), vocabulary_.end());
  if (!std::binary_search(vocabulary_.begin(), vocabulary_.end(), target_)) {
    throw core::DomainError("wordle target not in vocabulary: " + target_);
  }
}

const protocol::EnvDescriptor& WordleWorld::descriptor() const { return wordle_descriptor(); }

std::string WordleWorld::instruction_text() const {
  return "Now let's start a new game. Remember, the word you guess should be strictly in the "
         "vocabulary. You should return your thought and your word strictly in the format "
         "mentioned above. The vocabulary is: " +
         util::join(vocabulary_, ", ") + ".";
}

protocol::StepResult WordleWorld::step(const std::string& action) {
  if (done_) throw std::logic_error("step on finished wordle world");
  rounds_used_ += 1;

  protocol::StepResult result;
  result.step_reward = -1.0;
  const std::string guess = strip_whitespace(action);
  if (!is_five_lowercase_letters(guess) ||
      !std::binary_search(vocabulary_.begin(), vocabulary_.end(), guess)) {
    // Invalid guesses consume a protocol round but not one of the 6 attempts.
    result.observation = "invalid word";
  } else {
    attempts_used_ += 1;
    result.observation = wordle_feedback(target_, guess);
    if (guess == target_) {
      done_ = true;
      reward_ = 1.0;
    } else if (attempts_used_ >= kMaxAttempts) {
      done_ = true;
      reward_ = 0.0;
    }
  }
  if (!done_ && rounds_used_ >= kMaxRounds) {
    done_ = true;
    reward_ = 0.0;
  }
  result.done = done_;
  result.trajectory_reward_so_far = reward_;
  return result;
}

std::string WordleWorld::fingerprint() const {
  return "wordle:target=" + target_ + ";attempts=" + std::to_string(attempts_used_) +
         ";rounds=" + std::to_string(rounds_used_);
}

std::vector<std::string> load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw core::DomainError("cannot open vocabulary file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const std::string word = util::trim(line);
    if (word.empty()) continue;
    if (!is_five_lowercase_letters(word)) {
      throw core::DomainError("vocabulary word is not 5 lowercase letters: " + word);
    }
    words.push_back(word);
  }
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

std::unique_ptr<WordleWorld> generate_wordle(std::uint64_t seed, int vocab_size,
                                             const std::vector<std::string>& base_vocabulary) {
  if (vocab_size < 50 || vocab_size > 500) {
    throw core::DomainError("wordle vocabulary size must be in [50,500], got " +
                            std::to_string(vocab_size));
  }
  if (static_cast<std::size_t>(vocab_size) > base_vocabulary.size()) {
    throw core::DomainError("wordle vocabulary size exceeds the base word list");
  }
  auto rng = util::make_rng(util::mix(util::mix(seed, "wordle"), static_cast<std::uint64_t>(vocab_size)));
  std::vector<std::string> pool = base_vocabulary;
  util::seeded_shuffle(pool, rng);
  std::vector<std::string> vocabulary(pool.begin(), pool.begin() + vocab_size);
  std::sort(vocabulary.begin(), vocabulary.end());
  const std::string target = vocabulary[util::next_below(rng, vocabulary.size())];
  return std::make_unique<WordleWorld>(std::move(vocabulary), target);
}

}  // namespace evolgym::envs
