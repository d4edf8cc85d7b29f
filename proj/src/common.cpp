// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/common.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

namespace arbilomod
{

int default_thread_count()
{
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)> &body)
{
  if (threads <= 0)
  {
    threads = default_thread_count();
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1)
  {
    for (std::size_t i = 0; i < count; i++)
    {
      body(i);
    }
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; w++)
  {
    pool.emplace_back(
        [&, w]()
        {
          for (std::size_t i = w; i < count; i += workers)
          {
            try
            {
              body(i);
            }
            catch (...)
            {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!first_error)
              {
                first_error = std::current_exception();
              }
              return;
            }
          }
        });
  }
  for (auto &t : pool)
  {
    t.join();
  }
  if (first_error)
  {
    std::rethrow_exception(first_error);
  }
}

}  // namespace arbilomod
